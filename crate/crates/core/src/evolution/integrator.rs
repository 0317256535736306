use crate::axi_fields::AxiField;
use crate::error::{Error, Result};
use crate::linalg::{Tridiagonal, TridiagonalLu};

use super::dynamics::Dynamics;

/// Norm beyond which a run is declared unstable.
pub const BLOW_UP: f64 = 1e10;

/// ARS(2,2,2) IMEX Runge–Kutta: L-stable SDIRK implicit part, second-order
/// explicit part; stiffly accurate.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub dynamics: Dynamics,
    pub dt: f64,
    gamma: f64,
    delta: f64,
    /// `(1 − γ dt I)⁻¹` per component and axial slot
    solvers: Vec<Vec<Option<TridiagonalLu>>>,
}

impl Integrator {
    pub fn new(dynamics: Dynamics) -> Result<Self> {
        let dt = dynamics.config.dt;
        let gamma = 1.0 - 1.0 / 2f64.sqrt();
        let delta = 1.0 - 1.0 / (2.0 * gamma);
        let g = dynamics.grid.clone();
        let mut solvers = Vec::with_capacity(5);
        for c in 0..5 {
            let mut per_slot = Vec::with_capacity(g.n_z);
            for s in 0..g.n_z {
                let lu = match dynamics.implicit_radial(c, s) {
                    Some(a) => {
                        let mut m = Tridiagonal::zeros(a.len()).axpy(-gamma * dt, &a);
                        for d in &mut m.diag {
                            *d += 1.0;
                        }
                        Some(m.factor()?)
                    }
                    None => None,
                };
                per_slot.push(lu);
            }
            solvers.push(per_slot);
        }
        Ok(Self {
            dynamics,
            dt,
            gamma,
            delta,
            solvers,
        })
    }

    /// Steps needed to reach `t_end` from zero.
    pub fn steps(&self) -> usize {
        (self.dynamics.config.t_end / self.dt).round() as usize
    }

    fn has_implicit(&self) -> bool {
        self.solvers.iter().any(|v| v.iter().any(Option::is_some))
    }

    /// `(1 − γ dt I)⁻¹ b`, slot by slot in the axial basis of each component.
    fn solve_implicit(&self, b: &AxiField) -> AxiField {
        if !self.has_implicit() {
            return b.clone();
        }
        let g = &self.dynamics.grid;
        let classes = [
            crate::axi_fields::U_R_CLASS,
            crate::axi_fields::U_THETA_CLASS,
            crate::axi_fields::U_Z_CLASS,
            crate::axi_fields::PHI_CLASS,
            crate::axi_fields::B_THETA_CLASS,
        ];
        let mut out = b.clone();
        for (c, dst) in out.components_mut().into_iter().enumerate() {
            let mut coef = g.to_spectral(dst, classes[c]);
            let mut row = vec![0.0; coef.ncols()];
            for (s, lu) in self.solvers[c].iter().enumerate() {
                let Some(lu) = lu else { continue };
                for (i, v) in row.iter_mut().enumerate() {
                    *v = coef[(s, i)];
                }
                lu.solve_in_place(&mut row);
                for (i, v) in row.iter().enumerate() {
                    coef[(s, i)] = *v;
                }
            }
            *dst = g.from_spectral(&coef, classes[c]);
        }
        out
    }

    /// One step from `(x, t)`; the velocity is projected after every stage.
    pub fn step(&self, x: &AxiField, t: f64) -> Result<AxiField> {
        let (dt, g, d) = (self.dt, self.gamma, self.delta);
        let e1 = self.dynamics.explicit(x, t)?;
        let mut b2 = x.clone();
        b2.axpy(g * dt, &e1);
        let mut y2 = self.solve_implicit(&b2);
        // I(Y₂) from the stage equation, before projection
        let i2 = AxiField::combination(&[(1.0 / (g * dt), &y2), (-1.0 / (g * dt), &b2)]);
        y2.project()?;
        let e2 = self.dynamics.explicit(&y2, t + g * dt)?;
        let mut b3 = x.clone();
        b3.axpy(d * dt, &e1);
        b3.axpy((1.0 - d) * dt, &e2);
        if self.has_implicit() {
            b3.axpy((1.0 - g) * dt, &i2);
        }
        let mut y3 = self.solve_implicit(&b3);
        y3.project()?;
        let norm = y3.max_abs();
        if !(norm <= BLOW_UP) {
            return Err(Error::BlowUp { t: t + dt, norm });
        }
        Ok(y3)
    }

    /// Advances `n` steps, calling `observe(step, t, state)` after each.
    pub fn run(
        &self,
        x0: &AxiField,
        t0: f64,
        n: usize,
        mut observe: impl FnMut(usize, f64, &AxiField),
    ) -> Result<AxiField> {
        let mut x = x0.clone();
        for k in 0..n {
            let t = t0 + k as f64 * self.dt;
            x = self.step(&x, t)?;
            observe(k + 1, t + self.dt, &x);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::super::dynamics::EvolutionConfig;
    use super::*;
    use crate::axi_fields::{Frame, GridRZ, ZTopology};
    use crate::profiles::ProfileSpec;
    use std::sync::Arc;

    fn heat(g: &Arc<GridRZ>, dt: f64) -> Integrator {
        let cfg = EvolutionConfig {
            viscous: true,
            beta: 0.0,
            ..EvolutionConfig::ideal(dt, 1.0, 0.2)
        };
        Integrator::new(Dynamics::linear(g, &ProfileSpec::default_mri(0.2), cfg).unwrap()).unwrap()
    }

    /// `r s^{−5/2} e^{−(r²+z²)/4s}` solves the swirl heat equation exactly.
    fn swirl_kernel(r: f64, z: f64, s: f64) -> f64 {
        r * s.powf(-2.5) * (-(r * r + z * z) / (4.0 * s)).exp()
    }

    #[test]
    fn heat_decay_matches_closed_form_at_second_order() {
        let err = |n: usize| {
            let g = GridRZ::new(n, 64, 14.0, ZTopology::Truncated { z_max: 14.0 }).unwrap();
            let integ = heat(&g, 0.01);
            let mut x = AxiField::zeros(&g, Frame::Physical);
            x.u_theta = g.sample_centre(|r, z| swirl_kernel(r, z, 1.0));
            let y = integ.run(&x, 0.0, integ.steps(), |_, _, _| {}).unwrap();
            let exact = g.sample_centre(|r, z| swirl_kernel(r, z, 2.0));
            (&y.u_theta - &exact).amax() / exact.amax()
        };
        let (coarse, fine) = (err(96), err(192));
        let order = (coarse / fine).log2();
        assert!(fine < 6e-4, "{fine:e}");
        assert!((1.8..2.3).contains(&order), "{order}");
    }

    #[test]
    fn zero_stays_zero_and_step_is_linear() {
        let g = GridRZ::new(16, 12, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let cfg = EvolutionConfig::similarity(2e-3, 0.02, 0.2, 10.0);
        let integ = Integrator::new(Dynamics::linear(&g, &ProfileSpec::default_mri(0.2), cfg).unwrap()).unwrap();
        let z = integ.run(&AxiField::zeros(&g, Frame::Similarity), 0.0, 10, |_, _, _| {}).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let mut x = AxiField::zeros(&g, Frame::Similarity);
        x.u_theta = g.sample_centre(|r, z| r * (-(r * r + z * z)).exp());
        x.phi = g.sample_face(|r, z| r * r * (-(r * r + z * z)).exp() * z);
        let a = integ.step(&x.scaled(-3.0), 0.0).unwrap();
        let b = integ.step(&x, 0.0).unwrap().scaled(-3.0);
        let diff = AxiField::combination(&[(1.0, &a), (-1.0, &b)]);
        assert!(diff.max_abs() < 1e-13 * a.max_abs());
        assert!(a.divergence_residual() < 1e-11);
    }

    #[test]
    fn time_step_self_convergence_is_second_order() {
        let g = GridRZ::new(16, 12, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let mut x = AxiField::zeros(&g, Frame::Similarity);
        x.u_theta = g.sample_centre(|r, z| r * (-(r * r + z * z)).exp());
        x.phi = g.sample_face(|r, z| r * r * (-(r * r + z * z)).exp() * z);
        let run = |dt: f64| {
            let cfg = EvolutionConfig::similarity(dt, 0.4, 0.2, 5.0);
            let integ = Integrator::new(Dynamics::linear(&g, &ProfileSpec::default_mri(0.2), cfg).unwrap()).unwrap();
            integ.run(&x, 0.0, integ.steps(), |_, _, _| {}).unwrap()
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let e1 = AxiField::combination(&[(1.0, &a), (-1.0, &b)]).max_abs();
        let e2 = AxiField::combination(&[(1.0, &b), (-1.0, &c)]).max_abs();
        let ratio = e1 / e2;
        assert!((3.4..4.6).contains(&ratio), "{ratio}");
    }
}
