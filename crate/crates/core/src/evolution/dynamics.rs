use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::axi_fields::{
    sym_coupling, AxiField, Frame, GridRZ, Operand, ZClass, B_THETA_CLASS, PHI_CLASS, U_R_CLASS, U_THETA_CLASS,
    U_Z_CLASS,
};
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::profiles::{ProfileEvaluator, ProfileSpec};

/// Time-dependent explicit source in stored layout.
pub type Source = Arc<dyn Fn(f64) -> AxiField + Send + Sync>;

/// Physical parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    /// adds the vector Laplacian (unit viscosity and resistivity)
    pub viscous: bool,
    pub frame: Frame,
    /// coupling amplitude multiplying the background
    pub beta: f64,
    pub epsilon: f64,
    /// coefficient of the explicit `−ν₄Δ²` term
    #[serde(default)]
    pub hyperdiffusion: f64,
    #[serde(default = "default_renormalize")]
    pub renormalize_every: usize,
}

fn default_renormalize() -> usize {
    50
}

impl EvolutionConfig {
    pub fn ideal(dt: f64, t_end: f64, epsilon: f64) -> Self {
        Self {
            dt,
            t_end,
            viscous: false,
            frame: Frame::Physical,
            beta: 1.0,
            epsilon,
            hyperdiffusion: 0.0,
            renormalize_every: 50,
        }
    }

    pub fn similarity(dt: f64, t_end: f64, epsilon: f64, beta: f64) -> Self {
        Self {
            dt,
            t_end,
            viscous: true,
            frame: Frame::Similarity,
            beta,
            epsilon,
            hyperdiffusion: 0.0,
            renormalize_every: 50,
        }
    }
}

/// Radial operators and shifts of one stored component.
struct ComponentOps<'a> {
    class: ZClass,
    laplacian: &'a Tridiagonal,
    rdr: &'a Tridiagonal,
    /// constant part of the similarity drift
    shift: f64,
}

fn component_ops(grid: &GridRZ, c: usize) -> ComponentOps<'_> {
    match c {
        0 => ComponentOps {
            class: U_R_CLASS,
            laplacian: &grid.lap_face_vector,
            rdr: &grid.rdr_face,
            shift: 0.5,
        },
        1 => ComponentOps {
            class: U_THETA_CLASS,
            laplacian: &grid.lap_centre_swirl,
            rdr: &grid.rdr_centre_odd,
            shift: 0.5,
        },
        2 => ComponentOps {
            class: U_Z_CLASS,
            laplacian: &grid.lap_centre_axial,
            rdr: &grid.rdr_centre_even,
            shift: 0.5,
        },
        3 => ComponentOps {
            class: PHI_CLASS,
            laplacian: &grid.lap_face_flux,
            rdr: &grid.rdr_face,
            // φ carries one extra power of length
            shift: -0.5,
        },
        _ => ComponentOps {
            class: B_THETA_CLASS,
            laplacian: &grid.lap_centre_swirl,
            rdr: &grid.rdr_centre_odd,
            shift: 0.5,
        },
    }
}

/// Right-hand side `∂_t X = I(X) + E(X, t)` split into the implicit radial
/// part (diffusion, radial drift) and the explicit rest.
#[derive(Clone)]
pub struct Dynamics {
    pub grid: Arc<GridRZ>,
    pub config: EvolutionConfig,
    /// `β·(V₀, W₀)`, or `None` without background
    background: Option<Operand>,
    nonlinear: bool,
    source: Option<Source>,
    /// bound on the explicit frequencies
    nu_max: f64,
}

impl std::fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dynamics")
            .field("config", &self.config)
            .field("background", &self.background.is_some())
            .field("nonlinear", &self.nonlinear)
            .field("source", &self.source.is_some())
            .finish()
    }
}

/// Largest frequency the explicit part can produce, used for the CFL bound.
pub fn explicit_frequency(grid: &GridRZ, profile: &ProfileEvaluator, config: &EvolutionConfig) -> f64 {
    let k_max = grid
        .basis(ZClass::Dirichlet)
        .kappa
        .iter()
        .chain(&grid.basis(ZClass::Neumann).kappa)
        .fold(0.0f64, |a, &k| a.max(k));
    let mut coupling = 0.0f64;
    for &r in &grid.r_c {
        let p = profile.at(r);
        let alfven = config.epsilon * p.b.abs() * k_max;
        let rot = 2.0 * p.omega.abs() + (r * p.d_omega).abs();
        coupling = coupling.max(alfven + rot);
    }
    let mut nu = config.beta.abs() * coupling;
    if config.frame == Frame::Similarity {
        if let crate::axi_fields::ZTopology::Truncated { z_max } = grid.topology {
            nu += 0.5 * z_max * k_max;
        }
    }
    nu
}

/// `−ν₄Δ²` coefficient that offsets the leading RK2 amplification
/// `dt³ν⁴/8` of Alfvén waves `ν = v_A k`.
pub fn stabilizing_hyperdiffusion(dt: f64, alfven_speed: f64) -> f64 {
    dt.powi(3) * alfven_speed.powi(4) / 8.0
}

impl Dynamics {
    /// Linear dynamics about `β·Ξ₀` for the given profile (β = `config.beta`).
    pub fn linear(grid: &Arc<GridRZ>, profile: &ProfileSpec, config: EvolutionConfig) -> Result<Self> {
        if config.frame == Frame::Similarity && grid.is_periodic() {
            return Err(Error::FrameMismatch {
                expected: "truncated z for similarity frame",
                found: "periodic",
            });
        }
        if !(config.dt > 0.0) || !(config.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} and t_end = {} must be positive",
                config.dt, config.t_end
            )));
        }
        let ev = profile.evaluator()?;
        let nu = explicit_frequency(grid, &ev, &config);
        // RK2 stays within its amplification region for dt·ν ≤ 1
        if config.dt * nu > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "dt = {} violates the advective CFL bound dt <= {:.3e}",
                config.dt,
                1.0 / nu
            )));
        }
        let background = (config.beta != 0.0).then(|| Operand::background(grid, &ev, config.epsilon, config.beta));
        Ok(Self {
            grid: grid.clone(),
            config,
            background,
            nonlinear: false,
            source: None,
            nu_max: nu,
        })
    }

    /// Adds `−ℙ𝔅(X, X)`.
    pub fn with_nonlinearity(mut self) -> Self {
        self.nonlinear = true;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    pub fn is_linear(&self) -> bool {
        !self.nonlinear && self.source.is_none()
    }

    pub fn frame(&self) -> Frame {
        self.config.frame
    }

    /// Worst-case spurious growth rate of the explicit RK2 stage on purely
    /// oscillatory modes up to the CFL frequency: `ln(1 + θ⁴/4)/(2dt)`,
    /// `θ = dt·ν_max`.
    pub fn grid_tolerance(&self) -> f64 {
        let dt = self.config.dt;
        let theta = dt * self.nu_max;
        (0.25 * theta.powi(4)).ln_1p() / (2.0 * dt)
    }

    pub fn background(&self) -> Option<&Operand> {
        self.background.as_ref()
    }

    fn similarity(&self) -> bool {
        self.config.frame == Frame::Similarity
    }

    /// Radial tridiagonal of the implicit operator for component `c`, slot `s`.
    pub(crate) fn implicit_radial(&self, c: usize, s: usize) -> Option<Tridiagonal> {
        let ops = component_ops(&self.grid, c);
        let n = ops.laplacian.len();
        let mut t = Tridiagonal::zeros(n);
        let mut any = false;
        if self.config.viscous {
            let k = self.grid.basis(ops.class).kappa[s];
            t = t.axpy(1.0, ops.laplacian);
            for d in &mut t.diag {
                *d -= k * k;
            }
            any = true;
        }
        if self.similarity() {
            t = t.axpy(0.5, ops.rdr);
            for d in &mut t.diag {
                *d += ops.shift;
            }
            any = true;
        }
        any.then_some(t)
    }

    /// Implicit part `I(X)`, unprojected.
    pub fn implicit(&self, x: &AxiField) -> AxiField {
        let g = &self.grid;
        let mut out = AxiField::zeros(g, x.frame);
        for c in 0..5 {
            let ops = component_ops(g, c);
            let f = x.components()[c];
            let mut acc = DMatrix::zeros(f.nrows(), f.ncols());
            if self.config.viscous {
                acc += g.apply_radial(ops.laplacian, f) + g.dzz_of(f, ops.class);
            }
            if self.similarity() {
                acc += g.apply_radial(ops.rdr, f) * 0.5 + f * ops.shift;
            }
            *out.components_mut()[c] = acc;
        }
        out
    }

    /// `½ z∂_z X` (similarity frame only).
    fn axial_drift(&self, x: &AxiField) -> AxiField {
        let g = &self.grid;
        let mut out = AxiField::zeros(g, x.frame);
        for c in 0..5 {
            let ops = component_ops(g, c);
            let mut d = g.dz_of(x.components()[c], ops.class);
            for (j, &z) in g.z.iter().enumerate() {
                d.row_mut(j).scale_mut(0.5 * z);
            }
            *out.components_mut()[c] = d;
        }
        out
    }

    /// `Δ_h` of every component (radial stencil plus axial spectral part).
    pub fn laplacian(&self, x: &AxiField) -> AxiField {
        let g = &self.grid;
        let mut out = AxiField::zeros(g, x.frame);
        for c in 0..5 {
            let ops = component_ops(g, c);
            let f = x.components()[c];
            *out.components_mut()[c] = g.apply_radial(ops.laplacian, f) + g.dzz_of(f, ops.class);
        }
        out
    }

    /// `−(X₀·sym)` coupling with the background, unprojected.
    pub fn background_coupling(&self, x: &AxiField) -> AxiField {
        match &self.background {
            Some(bg) => sym_coupling(bg, &Operand::from_state(x), x.frame).scaled(-1.0),
            None => AxiField::zeros(&self.grid, x.frame),
        }
    }

    /// Explicit part `E(X, t)`, with the velocity projected.
    pub fn explicit(&self, x: &AxiField, t: f64) -> Result<AxiField> {
        let mut out = self.background_coupling(x);
        if self.nonlinear {
            let op = Operand::from_state(x);
            out.axpy(-0.5, &sym_coupling(&op, &op, x.frame));
        }
        if self.similarity() {
            out.axpy(1.0, &self.axial_drift(x));
        }
        if self.config.hyperdiffusion != 0.0 {
            let bi = self.laplacian(&self.laplacian(x));
            out.axpy(-self.config.hyperdiffusion, &bi);
        }
        if let Some(src) = &self.source {
            out.axpy(1.0, &src(t));
        }
        out.project()?;
        Ok(out)
    }

    /// Full right-hand side `ℙ(I(X) + E(X, t))`.
    pub fn rhs(&self, x: &AxiField, t: f64) -> Result<AxiField> {
        let mut out = self.explicit(x, t)?;
        out.axpy(1.0, &self.implicit(x));
        out.project()?;
        Ok(out)
    }
}

fn require(x: &AxiField, frame: Frame) -> Result<()> {
    if x.frame != frame {
        return Err(Error::FrameMismatch {
            expected: frame.name(),
            found: x.frame.name(),
        });
    }
    Ok(())
}

/// Linearized ideal system about `(rω e_θ, εb e_z)`: `−ℙ(𝔅(Ξ₀,X) + 𝔅(X,Ξ₀))`.
pub fn rhs_linear_ideal(x: &AxiField, background: &Operand) -> Result<AxiField> {
    require(x, Frame::Physical)?;
    if !x.grid.is_periodic() {
        return Err(Error::FrameMismatch {
            expected: "periodic z",
            found: "truncated z",
        });
    }
    let mut out = sym_coupling(background, &Operand::from_state(x), x.frame).scaled(-1.0);
    out.project()?;
    Ok(out)
}

/// `−βℙ(𝔅(Ξ₀,X) + 𝔅(X,Ξ₀)) + ΔX`.
pub fn rhs_linear_viscous(x: &AxiField, background: &Operand, beta: f64) -> Result<AxiField> {
    let g = &x.grid;
    let mut out = sym_coupling(background, &Operand::from_state(x), x.frame).scaled(-beta);
    for c in 0..5 {
        let ops = component_ops(g, c);
        let f = x.components()[c];
        *out.components_mut()[c] += g.apply_radial(ops.laplacian, f) + g.dzz_of(f, ops.class);
    }
    out.project()?;
    Ok(out)
}

/// Similarity-frame Leray right-hand side for the perturbation `X = Ξ − βΞ₀`:
/// `½(1+ξ·∇)X + ΔX − ℙ(β𝔅(Ξ₀,X) + β𝔅(X,Ξ₀) + 𝔅(X,X)) + S(τ)`. The steady
/// part cancels against the background force by construction.
pub fn rhs_leray_nonlinear(x: &AxiField, dynamics: &Dynamics, tau: f64) -> Result<AxiField> {
    require(x, Frame::Similarity)?;
    if !dynamics.similarity() || !dynamics.nonlinear {
        return Err(Error::InvalidArgument(
            "rhs_leray_nonlinear needs nonlinear similarity dynamics".into(),
        ));
    }
    dynamics.rhs(x, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axi_fields::ZTopology;
    use std::f64::consts::PI;

    fn sample(g: &Arc<GridRZ>, frame: Frame) -> AxiField {
        let mut x = AxiField::zeros(g, frame);
        x.u_r = g.sample_face(|r, z| r * (-r * r).exp() * (z.sin() + 0.3 * (2.0 * z).cos()));
        x.u_theta = g.sample_centre(|r, z| r * (-r * r).exp() * z.cos());
        x.u_z = g.sample_centre(|r, z| (-r * r).exp() * (z.cos() + 0.1));
        x.phi = g.sample_face(|r, z| r * r * (-r * r).exp() * z.sin());
        x.b_theta = g.sample_centre(|r, z| r * (-r * r).exp() * (z + 0.4).cos());
        x.project().unwrap();
        x
    }

    fn periodic() -> Arc<GridRZ> {
        GridRZ::new(32, 16, 6.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap()
    }

    #[test]
    fn zero_state_gives_zero_rhs() {
        let g = periodic();
        let ev = ProfileSpec::default_mri(0.05).evaluator().unwrap();
        let bg = Operand::background(&g, &ev, 0.05, 1.0);
        let out = rhs_linear_ideal(&AxiField::zeros(&g, Frame::Physical), &bg).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn flux_rhs_vanishes_without_radial_velocity() {
        let g = periodic();
        let ev = ProfileSpec::default_mri(0.05).evaluator().unwrap();
        let bg = Operand::background(&g, &ev, 0.05, 1.0);
        let mut x = sample(&g, Frame::Physical);
        x.u_r.fill(0.0);
        let out = rhs_linear_ideal(&x, &bg).unwrap();
        assert_eq!(out.phi.amax(), 0.0);
    }

    #[test]
    fn ideal_rhs_rejects_similarity_frame() {
        let g = periodic();
        let ev = ProfileSpec::default_mri(0.05).evaluator().unwrap();
        let bg = Operand::background(&g, &ev, 0.05, 1.0);
        let x = AxiField::zeros(&g, Frame::Similarity);
        assert!(matches!(rhs_linear_ideal(&x, &bg), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn viscous_minus_laplacian_is_scaled_ideal() {
        let g = periodic();
        let ev = ProfileSpec::default_mri(0.05).evaluator().unwrap();
        let bg = Operand::background(&g, &ev, 0.05, 1.0);
        let x = sample(&g, Frame::Physical);
        let beta = 3.0;
        let mut lap = Dynamics::linear(&g, &ProfileSpec::default_mri(0.05), EvolutionConfig {
            viscous: true,
            beta: 0.0,
            ..EvolutionConfig::ideal(1e-3, 1.0, 0.05)
        })
        .unwrap()
        .laplacian(&x);
        lap.project().unwrap();
        let visc = rhs_linear_viscous(&x, &bg, beta).unwrap();
        let ideal = rhs_linear_ideal(&x, &bg).unwrap();
        let diff = AxiField::combination(&[(1.0, &visc), (-1.0, &lap), (-beta, &ideal)]);
        assert!(diff.max_abs() < 1e-11 * visc.max_abs(), "{}", diff.max_abs());
        // β = 0 leaves only the heat part
        let heat = rhs_linear_viscous(&x, &bg, 0.0).unwrap();
        let d0 = AxiField::combination(&[(1.0, &heat), (-1.0, &lap)]);
        assert!(d0.max_abs() < 1e-12 * heat.max_abs());
    }

    #[test]
    fn laplacian_converges_at_second_order() {
        // u_θ = r e^{−r²} cos z: (Δ − 1/r²)u_θ = r(4r² − 8)e^{−r²}cos z − u_θ
        let err = |n: usize| {
            let g = GridRZ::new(n, 8, 6.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
            let mut x = AxiField::zeros(&g, Frame::Physical);
            x.u_theta = g.sample_centre(|r, z| r * (-r * r).exp() * z.cos());
            let dynamics = Dynamics::linear(&g, &ProfileSpec::default_mri(0.05), EvolutionConfig {
                viscous: true,
                beta: 0.0,
                ..EvolutionConfig::ideal(1e-3, 1.0, 0.05)
            })
            .unwrap();
            let lap = dynamics.laplacian(&x);
            let exact = g.sample_centre(|r, z| r * (4.0 * r * r - 8.0) * (-r * r).exp() * z.cos() - r * (-r * r).exp() * z.cos());
            (&lap.u_theta - exact).amax()
        };
        let order = (err(48) / err(96)).log2();
        assert!((1.8..2.3).contains(&order), "{order}");
    }

    #[test]
    fn background_coupling_is_linear() {
        let g = GridRZ::new(16, 12, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let d = Dynamics::linear(&g, &ProfileSpec::default_mri(0.2), EvolutionConfig::similarity(1e-3, 1.0, 0.2, 5.0))
            .unwrap();
        let x = sample(&g, Frame::Similarity);
        let a = d.rhs(&x.scaled(2.5), 0.0).unwrap();
        let b = d.rhs(&x, 0.0).unwrap().scaled(2.5);
        let diff = AxiField::combination(&[(1.0, &a), (-1.0, &b)]);
        assert!(diff.max_abs() < 1e-12 * a.max_abs());
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = periodic();
        let r = Dynamics::linear(&g, &ProfileSpec::default_mri(10.0), EvolutionConfig::ideal(1.0, 1.0, 10.0));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
