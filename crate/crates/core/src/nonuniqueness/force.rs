use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::axi_fields::{sym_coupling, AxiField, Frame, GridRZ, Operand, ZTopology};
use crate::error::{Error, Result};
use crate::profiles::{ProfileEvaluator, ProfileSpec};

/// How the steady quadratic term enters the force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceConvention {
    /// `β²ℙ𝔅(Ξ₀, Ξ₀)`
    Single,
    /// `β²ℙ(𝔅(Ξ₀, Ξ₀) + 𝔅(Ξ₀, Ξ₀))`
    Doubled,
}

impl ForceConvention {
    fn factor(self) -> f64 {
        match self {
            Self::Single => 0.5,
            Self::Doubled => 1.0,
        }
    }
}

/// Profile of the self-similar force `F(ξ)` that makes `βΞ₀` steady in the
/// similarity frame; the physical force is `f(x, t) = t^{−3/2} F(x/√t)`.
#[derive(Debug, Clone)]
pub struct BackgroundForce {
    pub beta: f64,
    pub epsilon: f64,
    pub spec: ProfileSpec,
    evaluator: ProfileEvaluator,
}

/// Interior steadiness residuals of `βΞ₀` under the discrete operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadinessResidual {
    pub swirl: f64,
    pub axial_field: f64,
    /// `|β²ℙ𝔅(Ξ₀, Ξ₀)|` after projection, for the convention in use
    pub quadratic: f64,
    /// `max |F|` over the same cells
    pub force_scale: f64,
}

impl SteadinessResidual {
    pub fn relative(&self) -> f64 {
        self.swirl.max(self.axial_field).max(self.quadratic) / self.force_scale.max(f64::MIN_POSITIVE)
    }
}

impl BackgroundForce {
    pub fn new(spec: &ProfileSpec, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta = {beta} must be finite and >= 0")));
        }
        Ok(Self {
            beta,
            epsilon: spec.epsilon,
            spec: spec.clone(),
            evaluator: spec.evaluator()?,
        })
    }

    pub fn evaluator(&self) -> &ProfileEvaluator {
        &self.evaluator
    }

    /// `(F_θ, F_z)` at radius `r`: `F_V = −(β/2)(v + rv')e_θ − β(v'' + v'/r − v/r²)e_θ`,
    /// `F_W = −(β/2)ε(b + rb')e_z − βε(b'' + b'/r)e_z`.
    pub fn at(&self, r: f64) -> (f64, f64) {
        let p = self.evaluator.at(r);
        let (v, dv, d2v) = (p.swirl(r), p.d_swirl(r), p.d2_swirl(r));
        let (b, db, d2b) = (p.b, p.d_b, p.d2_b);
        let beta = self.beta;
        let f_theta = -0.5 * beta * (v + r * dv) - beta * (d2v + dv / r - v / (r * r));
        let f_z = -0.5 * beta * self.epsilon * (b + r * db) - beta * self.epsilon * (d2b + db / r);
        (f_theta, f_z)
    }

    /// Background `(βv, βεb)` at radius `r`.
    pub fn background_at(&self, r: f64) -> (f64, f64) {
        let p = self.evaluator.at(r);
        (self.beta * p.swirl(r), self.beta * self.epsilon * p.b)
    }

    /// Physical force `(f_θ, f_z)` at `(r, t)`.
    pub fn physical(&self, r: f64, t: f64) -> (f64, f64) {
        let s = t.sqrt();
        let (a, b) = self.at(r / s);
        (a / (t * s), b / (t * s))
    }

    /// Residual of `½(1+ξ·∇)βΞ₀ + βΔΞ₀ − β²ℙ𝔅 + F` on the cells with
    /// `r ≤ interior·R`, `interior < 1`; the quadratic part uses a periodic
    /// companion grid.
    pub fn steadiness_residual(&self, grid: &GridRZ, convention: ForceConvention, interior: f64) -> Result<SteadinessResidual> {
        let n = grid.n_r;
        let mut v = vec![0.0; n];
        let mut b = vec![0.0; n];
        for (i, &r) in grid.r_c.iter().enumerate() {
            let (a, c) = self.background_at(r);
            v[i] = a;
            b[i] = c;
        }
        let lap_v = grid.lap_centre_swirl.matvec(&v);
        let lap_b = grid.lap_centre_axial.matvec(&b);
        let rdr_v = grid.rdr_centre_odd.matvec(&v);
        let rdr_b = grid.rdr_centre_even.matvec(&b);
        let (mut swirl, mut axial, mut scale) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            let r = grid.r_c[i];
            if r > interior * grid.r_max {
                break;
            }
            let (f_theta, f_z) = self.at(r);
            let res_v = 0.5 * (v[i] + rdr_v[i]) + lap_v[i] + f_theta;
            let res_b = 0.5 * (b[i] + rdr_b[i]) + lap_b[i] + f_z;
            swirl = swirl.max(res_v.abs());
            axial = axial.max(res_b.abs());
            scale = scale.max(f_theta.abs()).max(f_z.abs());
        }
        let periodic = GridRZ::new(n, 4, grid.r_max, ZTopology::Periodic { period: 2.0 * PI })?;
        let bg = Operand::background(&periodic, &self.evaluator, self.epsilon, self.beta);
        let mut q = sym_coupling(&bg, &bg, Frame::Similarity).scaled(convention.factor());
        q.project()?;
        let mut quadratic = 0.0f64;
        for (i, &r) in periodic.r_c.iter().enumerate() {
            if r > interior * grid.r_max {
                break;
            }
            for c in [&q.u_theta, &q.u_z, &q.b_theta] {
                quadratic = quadratic.max(c.column(i).amax());
            }
            if i < periodic.n_faces() {
                quadratic = quadratic.max(q.u_r.column(i).amax()).max(q.phi.column(i).amax() / r);
            }
        }
        Ok(SteadinessResidual {
            swirl,
            axial_field: axial,
            quadratic,
            force_scale: scale,
        })
    }

    /// Force sampled in stored layout: `F_θ` on `u_θ`, and the flux
    /// `φ_F = −∫₀^r ρF_z dρ` whose field is `F_z e_z`.
    pub fn sample(&self, grid: &std::sync::Arc<GridRZ>) -> AxiField {
        let mut out = AxiField::zeros(grid, Frame::Similarity);
        for (i, &r) in grid.r_c.iter().enumerate() {
            out.u_theta.column_mut(i).fill(self.at(r).0);
        }
        let (nodes, weights) = crate::stencil::gauss_legendre(16);
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (i, &r) in grid.r_f.iter().enumerate() {
            let half = 0.5 * (r - lo);
            acc += nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| {
                    let rho = lo + half * (x + 1.0);
                    w * half * rho * self.at(rho).1
                })
                .sum::<f64>();
            out.phi.column_mut(i).fill(-acc);
            lo = r;
        }
        out
    }
}
