use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::axi_fields::{l2_magnetic, l2_velocity, AxiField, GridRZ, ZTopology};
use crate::error::{Error, Result};

use super::force::BackgroundForce;
use super::trajectory::Trajectory;

/// Background `(v₁, H₁) = (β/√t)Ξ₀(x/√t)` and the second solution
/// `(v₂, H₂) = (1/√t)(βΞ₀ + X)(x/√t, log t)`, driven by one force.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub force: Arc<BackgroundForce>,
    /// `X = Ξ − βΞ₀` on the stored `τ` grid
    pub perturbation: Trajectory,
    /// growth rate of the leading mode
    pub a: f64,
}

/// One physical time of the pair.
#[derive(Debug, Clone)]
pub struct PhysicalSample {
    pub t: f64,
    pub tau: f64,
    pub perturbation: AxiField,
}

/// Norm history in physical variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNorms {
    pub t: f64,
    pub background_velocity: f64,
    pub second_velocity: f64,
    /// `‖v₁ − v₂‖_{L²}`
    pub separation: f64,
    pub separation_magnetic: f64,
}

/// `(R, Z)` of the similarity box.
pub fn box_extent(grid: &GridRZ) -> Result<(f64, f64)> {
    match grid.topology {
        ZTopology::Truncated { z_max } => Ok((grid.r_max, z_max)),
        ZTopology::Periodic { .. } => Err(Error::FrameMismatch {
            expected: "truncated z",
            found: "periodic",
        }),
    }
}

/// `∫₀^R f(ρ) dρ` by composite Gauss–Legendre on `panels` equal panels.
pub fn radial_quadrature(r_max: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = crate::stencil::gauss_legendre(12);
    let h = r_max / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = p as f64 * h;
            x.iter().zip(&w).map(|(x, w)| w * 0.5 * h * f(lo + 0.5 * h * (x + 1.0))).sum::<f64>()
        })
        .sum()
}

impl SolutionPair {
    pub fn new(force: Arc<BackgroundForce>, perturbation: Trajectory, a: f64) -> Result<Self> {
        box_extent(&perturbation.states[0].grid)?;
        Ok(Self { force, perturbation, a })
    }

    pub fn grid(&self) -> &Arc<GridRZ> {
        &self.perturbation.states[0].grid
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.perturbation.tau0.exp(), self.perturbation.tau_end().exp())
    }

    /// `‖V₀‖²_{L²(D)}` and `‖εbe_z‖²_{L²(D)}` of the unscaled background.
    pub fn background_l2_squared(&self) -> (f64, f64) {
        let (r_max, z_max) = box_extent(self.grid()).expect("checked in new");
        let ev = self.force.evaluator();
        let eps = self.force.epsilon;
        let v = radial_quadrature(r_max, 64, |r| {
            let p = ev.at(r);
            p.swirl(r).powi(2) * r
        });
        let b = radial_quadrature(r_max, 64, |r| (eps * ev.at(r).b).powi(2) * r);
        (4.0 * PI * z_max * v, 4.0 * PI * z_max * b)
    }

    /// Pullback to physical times, cubic in `τ = log t`.
    pub fn to_physical(&self, times: &[f64]) -> Result<Vec<PhysicalSample>> {
        times
            .iter()
            .map(|&t| {
                if !(t > 0.0) {
                    return Err(Error::InvalidArgument(format!("time {t} must be > 0")));
                }
                let tau = t.ln();
                Ok(PhysicalSample {
                    t,
                    tau,
                    perturbation: self.perturbation.at(tau)?,
                })
            })
            .collect()
    }

    /// Physical L² norms on `|x_r| ≤ √t R`, `|x_z| ≤ √t Z` at the stored times:
    /// `‖U(t)‖ = t^{1/4}‖Ξ‖_{L²(D)}`.
    pub fn norm_history(&self) -> Vec<PhysicalNorms> {
        let (v0, _) = self.background_l2_squared();
        let beta = self.force.beta;
        let ev = self.force.evaluator();
        let g = self.grid();
        let v0_theta = g.sample_centre(|r, _| ev.at(r).swirl(r));
        self.perturbation
            .taus()
            .iter()
            .zip(&self.perturbation.states)
            .map(|(&tau, x)| {
                let s = (0.25 * tau).exp();
                let xv = l2_velocity(x);
                let cross = g.integrate_centre(&v0_theta.component_mul(&x.u_theta));
                let second = (beta * beta * v0 + 2.0 * beta * cross + xv * xv).max(0.0).sqrt();
                PhysicalNorms {
                    t: tau.exp(),
                    background_velocity: s * beta * v0.sqrt(),
                    second_velocity: s * second,
                    separation: s * xv,
                    separation_magnetic: s * l2_magnetic(x),
                }
            })
            .collect()
    }

    /// Slope of `log‖v₁ − v₂‖` against `log t` over `[t_lo, t_hi]`.
    pub fn separation_slope(&self, t_lo: f64, t_hi: f64) -> (f64, f64) {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .norm_history()
            .iter()
            .filter(|n| n.t >= t_lo * (1.0 - 1e-12) && n.t <= t_hi * (1.0 + 1e-12) && n.separation > 0.0)
            .map(|n| (n.t.ln(), n.separation.ln()))
            .unzip();
        if x.len() < 3 {
            return (f64::NAN, 0.0);
        }
        let (slope, _, r2) = crate::linalg::linear_fit(&x, &y);
        (slope, r2)
    }

    /// The pair under `U_λ(x, t) = λU(λx, λ²t)`, `f_λ = λ³f(λx, λ²t)`:
    /// similarity profiles are unchanged and `τ` shifts by `2 log λ`.
    pub fn rescaled(&self, lambda: f64) -> Result<SolutionPair> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must be > 0")));
        }
        let mut p = self.perturbation.clone();
        p.tau0 -= 2.0 * lambda.ln();
        SolutionPair::new(self.force.clone(), p, self.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axi_fields::Frame;
    use crate::profiles::ProfileSpec;

    fn pair(amplitude: f64) -> SolutionPair {
        let g = GridRZ::new(24, 24, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let mut eta = AxiField::zeros(&g, Frame::Similarity);
        eta.u_theta = g.sample_centre(|r, z| r * (-(r * r + z * z)).exp());
        let a = 0.4;
        let states = (0..41).map(|k| eta.scaled(amplitude * (a * (-8.0 + 0.2 * k as f64)).exp())).collect();
        let force = BackgroundForce::new(&ProfileSpec::default_mri(0.5), 25.0).unwrap();
        SolutionPair::new(Arc::new(force), Trajectory::new(-8.0, 0.2, states).unwrap(), a).unwrap()
    }

    #[test]
    fn background_norm_obeys_quarter_power_scaling() {
        let p = pair(1.0);
        let h = p.norm_history();
        let (v0, _) = p.background_l2_squared();
        for n in &h {
            let want = n.t.powf(0.25) * 25.0 * v0.sqrt();
            assert!((n.background_velocity - want).abs() < 1e-12 * want);
        }
        // both norms vanish as t → 0 along the stored times
        assert!(h.windows(2).all(|w| w[0].background_velocity < w[1].background_velocity));
        assert!(h.windows(2).all(|w| w[0].second_velocity < w[1].second_velocity));
    }

    #[test]
    fn background_l2_matches_closed_form() {
        // ∫₀^R r³(1+r²)^{−3/2} dr = √(1+R²) + 1/√(1+R²) − 2
        let p = pair(1.0);
        let (v0, b0) = p.background_l2_squared();
        let s = (1.0f64 + 36.0).sqrt();
        let want = 4.0 * PI * 6.0 * (s + 1.0 / s - 2.0);
        assert!((v0 - want).abs() < 1e-12 * want, "{v0} {want}");
        assert!((b0 - 4.0 * PI * 6.0 * 0.25 * 18.0).abs() < 1e-10);
    }

    #[test]
    fn separation_of_pure_mode_has_slope_quarter_plus_a() {
        let p = pair(1e-3);
        let (slope, r2) = p.separation_slope((-8.0f64).exp(), 0.0f64.exp());
        assert!((slope - 0.65).abs() < 1e-10 && r2 > 0.999999, "{slope}");
    }

    #[test]
    fn pullback_interpolates_and_rejects_extrapolation() {
        let p = pair(1.0);
        let s = p.to_physical(&[(-3.05f64).exp()]).unwrap();
        let want = (0.4 * -3.05f64).exp();
        let got = s[0].perturbation.u_theta.amax() / p.perturbation.states[0].u_theta.amax() * (0.4 * 8.0f64).exp().recip();
        assert!((got / want - 1.0).abs() < 1e-5, "{got} {want}");
        assert!(p.to_physical(&[2.0]).is_err());
        assert!(p.to_physical(&[-1.0]).is_err());
    }

    #[test]
    fn rescaling_shifts_the_time_window() {
        let p = pair(1.0);
        let q = p.rescaled(2.0).unwrap();
        let (lo, hi) = p.t_range();
        let (lo2, hi2) = q.t_range();
        assert!((lo2 - lo / 4.0).abs() < 1e-15 && (hi2 - hi / 4.0).abs() < 1e-12);
        let a = p.norm_history();
        let b = q.norm_history();
        // ‖U_λ(t)‖ = λ^{−1/2}‖U(λ²t)‖
        for (x, y) in a.iter().zip(&b) {
            assert!((y.separation - x.separation / 2f64.sqrt()).abs() < 1e-12 * x.separation);
        }
    }
}
