use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::axi_fields::{norms, sym_coupling, AxiField, Frame, Operand};
use crate::error::{Error, Result};
use crate::evolution::{state_norm, Dynamics, Integrator};
use crate::linalg::linear_fit;

use super::trajectory::{build_xlim, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionConfig {
    pub beta: f64,
    /// leading eigenvalue of the similarity operator
    pub a: f64,
    pub tau_start: f64,
    #[serde(default)]
    pub tau_end: f64,
    /// multiplies the unit eigenfunction
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "three")]
    pub sobolev_order: usize,
    /// margin in the 𝕏 weight; `a/2` when absent
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default = "picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "max_picard")]
    pub max_picard: usize,
    #[serde(default = "max_halvings")]
    pub max_halvings: usize,
    /// largest accepted successive-difference ratio
    #[serde(default = "max_ratio")]
    pub max_ratio: f64,
    #[serde(default = "max_stored")]
    pub max_stored: usize,
}

fn one() -> f64 {
    1.0
}
fn three() -> usize {
    3
}
fn picard_tol() -> f64 {
    1e-9
}
fn max_picard() -> usize {
    40
}
fn max_halvings() -> usize {
    5
}
fn max_ratio() -> f64 {
    0.5
}
fn max_stored() -> usize {
    600
}

impl ConstructionConfig {
    pub fn new(beta: f64, a: f64, tau_start: f64, tau_end: f64) -> Self {
        Self {
            beta,
            a,
            tau_start,
            tau_end,
            amplitude: 1.0,
            sobolev_order: 3,
            epsilon0: None,
            picard_tol: picard_tol(),
            max_picard: max_picard(),
            max_halvings: max_halvings(),
            max_ratio: max_ratio(),
            max_stored: max_stored(),
        }
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0.unwrap_or(0.5 * self.a)
    }

    /// All violated invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.a > 0.0) {
            out.push(format!("a = {} must be > 0", self.a));
        }
        if !(self.tau_start <= self.tau_end - 5.0 / self.a) {
            out.push(format!(
                "tau_start = {} must be <= tau_end - 5/a = {}",
                self.tau_start,
                self.tau_end - 5.0 / self.a
            ));
        }
        if !(self.amplitude >= 0.0) {
            out.push(format!("amplitude = {} must be >= 0", self.amplitude));
        }
        if self.sobolev_order > crate::axi_fields::MAX_ORDER {
            out.push(format!("sobolev_order = {} exceeds {}", self.sobolev_order, crate::axi_fields::MAX_ORDER));
        }
        if !(self.epsilon0() > 0.0) {
            out.push(format!("epsilon0 = {} must be > 0", self.epsilon0()));
        }
        if !(self.picard_tol > 0.0) {
            out.push(format!("picard_tol = {} must be > 0", self.picard_tol));
        }
        if !(self.max_ratio > 0.0 && self.max_ratio < 1.0) {
            out.push(format!("max_ratio = {} must lie in (0, 1)", self.max_ratio));
        }
        if self.max_stored < 8 {
            out.push(format!("max_stored = {} must be >= 8", self.max_stored));
        }
        out
    }
}

/// Perturbation construction about `βΞ₀ + A e^{aτ}η`.
#[derive(Clone)]
pub struct Construction {
    pub config: ConstructionConfig,
    /// linear similarity dynamics about `βΞ₀`
    pub dynamics: Dynamics,
    pub eta: AxiField,
    /// `𝔅(η, η)` in stored layout
    quadratic: AxiField,
    n_steps: usize,
    stride: usize,
}

/// Result of the Picard iteration.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub construction: Construction,
    pub perturbation: Trajectory,
    /// `‖𝒯ⁿ⁺¹ − 𝒯ⁿ‖_𝕏`
    pub differences: Vec<f64>,
    pub ratios: Vec<f64>,
    pub halvings: usize,
    /// `‖𝒯(Ξ^per) − Ξ^per‖_𝕏 / ‖Ξ^per‖_𝕏`
    pub residual: f64,
}

/// Serializable digest of a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSummary {
    pub beta: f64,
    pub a: f64,
    pub epsilon0: f64,
    pub amplitude: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub dt: f64,
    pub stored_dtau: f64,
    pub halvings: usize,
    pub differences: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub residual: f64,
    /// slope of `ln‖Ξ^per‖_{H^N}` over the last two e-foldings
    #[serde(deserialize_with = "super::verify::nullable_f64")]
    pub decay_slope: f64,
    #[serde(deserialize_with = "super::verify::nullable_f64")]
    pub decay_r2: f64,
    /// `‖Ξ^per(τ)‖_{H^N} ≤ ‖Ξ^lim(τ)‖_{H^N}` at every stored τ
    pub hierarchy_holds: bool,
    pub x_norm: f64,
}

impl std::fmt::Debug for Construction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Construction")
            .field("config", &self.config)
            .field("n_steps", &self.n_steps)
            .field("stride", &self.stride)
            .finish()
    }
}

impl Construction {
    /// `dynamics` must be linear similarity dynamics with `β = config.beta`;
    /// `tau_start` is moved down to a whole number of steps before `tau_end`.
    pub fn new(dynamics: Dynamics, eta: AxiField, mut config: ConstructionConfig) -> Result<Self> {
        let mut errs = config.violations();
        let n_eta = state_norm(&eta);
        if (n_eta - 1.0).abs() > 1e-8 {
            errs.push(format!("eta has L2 norm {n_eta}, expected 1"));
        }
        if dynamics.frame() != Frame::Similarity || !dynamics.is_linear() {
            errs.push("construction needs linear similarity dynamics".into());
        }
        if (dynamics.config.beta - config.beta).abs() > 1e-12 * config.beta.abs().max(1.0) {
            errs.push(format!("dynamics beta {} differs from {}", dynamics.config.beta, config.beta));
        }
        if eta.frame != Frame::Similarity {
            errs.push("eta must live in the similarity frame".into());
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let dt = dynamics.config.dt;
        let n_min = ((config.tau_end - config.tau_start) / dt - 1e-9).ceil().max(1.0) as usize;
        let stride = n_min.div_ceil(config.max_stored).max(1);
        let n_steps = n_min.div_ceil(stride) * stride;
        config.tau_start = config.tau_end - n_steps as f64 * dt;
        let op = Operand::from_state(&eta);
        let quadratic = sym_coupling(&op, &op, Frame::Similarity).scaled(0.5);
        Ok(Self {
            config,
            dynamics,
            eta,
            quadratic,
            n_steps,
            stride,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dynamics.config.dt
    }

    pub fn stored_dtau(&self) -> f64 {
        self.stride as f64 * self.dt()
    }

    pub fn epsilon0(&self) -> f64 {
        self.config.epsilon0()
    }

    /// Same construction with the window moved by `shift` in `τ`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.config.tau_start += shift;
        out.config.tau_end += shift;
        out
    }

    /// `A e^{aτ} η`.
    pub fn xlim(&self, tau: f64) -> AxiField {
        build_xlim(&self.eta, self.config.a, tau).scaled(self.config.amplitude)
    }

    /// `sup_τ e^{−(a+ε₀)τ}‖Y(τ)‖_{H^N}` over the stored nodes.
    pub fn x_norm(&self, y: &Trajectory) -> f64 {
        let w = self.config.a + self.epsilon0();
        let n = self.config.sobolev_order;
        y.states
            .iter()
            .enumerate()
            .map(|(k, x)| (-w * (y.tau0 + k as f64 * y.dtau)).exp() * norms(x, n).h_norm(n))
            .fold(0.0, f64::max)
    }

    /// Marches `dynamics` from `x0` at `tau_start`, storing every `stride` steps.
    fn march(&self, dynamics: Dynamics, x0: AxiField) -> Result<Trajectory> {
        let integ = Integrator::new(dynamics)?;
        let dt = self.dt();
        let tau0 = self.config.tau_start;
        let mut states = Vec::with_capacity(self.n_steps / self.stride + 1);
        states.push(x0.clone());
        let mut x = x0;
        for k in 0..self.n_steps {
            x = integ.step(&x, tau0 + k as f64 * dt)?;
            if (k + 1) % self.stride == 0 {
                states.push(x.clone());
            }
        }
        Trajectory::new(tau0, self.stored_dtau(), states)
    }

    /// `𝒯(Ξ^per)`: solves `∂_τY = L Y − ℙF(τ)` from `Y(tau_start) = 0` with
    /// `F = sym(Ξ^lim + ½Ξ^per, Ξ^per) + 𝔅(Ξ^lim, Ξ^lim)`.
    pub fn duhamel_map(&self, per: Option<&Trajectory>) -> Result<Trajectory> {
        let per = per.filter(|p| p.states.iter().any(|x| x.max_abs() > 0.0)).cloned().map(Arc::new);
        let (a, amp) = (self.config.a, self.config.amplitude);
        let eta = self.eta.clone();
        let quadratic = self.quadratic.clone();
        let source = move |tau: f64| -> AxiField {
            let mut s = quadratic.scaled(-(amp * amp) * (2.0 * a * tau).exp());
            if let Some(p) = &per {
                let y = p.at(tau).expect("source time inside the stored window");
                let mut left = eta.scaled(amp * (a * tau).exp());
                left.axpy(0.5, &y);
                s.axpy(-1.0, &sym_coupling(&Operand::from_state(&left), &Operand::from_state(&y), Frame::Similarity));
            }
            s
        };
        let dynamics = self.dynamics.clone().with_source(Arc::new(source));
        let zero = AxiField::zeros(&self.eta.grid, Frame::Similarity);
        self.march(dynamics, zero)
    }

    /// Picard iteration from `initial` (zero when `None`) without retuning.
    pub fn iterate(&self, initial: Option<Trajectory>) -> Result<(Trajectory, Vec<f64>, Vec<f64>)> {
        let mut per = initial;
        let mut differences = Vec::new();
        let mut ratios = Vec::new();
        for _ in 0..self.config.max_picard {
            let next = self.duhamel_map(per.as_ref())?;
            let diff = match &per {
                Some(p) => self.x_norm(&next.difference(p)?),
                None => self.x_norm(&next),
            };
            if let Some(&last) = differences.last() {
                let ratio: f64 = diff / last;
                ratios.push(ratio);
                if !(ratio < self.config.max_ratio) {
                    return Err(Error::FixedPointFailed(format!(
                        "successive-difference ratio {ratio:.3e} >= {} (history {ratios:?})",
                        self.config.max_ratio
                    )));
                }
            }
            differences.push(diff);
            let size = self.x_norm(&next);
            per = Some(next);
            if diff <= self.config.picard_tol * size || size == 0.0 {
                return Ok((per.unwrap(), differences, ratios));
            }
        }
        Err(Error::FixedPointFailed(format!(
            "no convergence in {} iterations (differences {differences:?})",
            self.config.max_picard
        )))
    }

    /// Picard iteration with `tau_start`, `tau_end` moved down by `ln 2/a`
    /// after every failure, up to `max_halvings` times.
    pub fn fixed_point(&self) -> Result<FixedPoint> {
        let step = std::f64::consts::LN_2 / self.config.a;
        let mut failures = Vec::new();
        for halvings in 0..=self.config.max_halvings {
            let c = self.shifted(-step * halvings as f64);
            match c.iterate(None) {
                Ok((perturbation, differences, ratios)) => {
                    let size = c.x_norm(&perturbation);
                    let residual = differences.last().copied().unwrap_or(0.0) / size.max(f64::MIN_POSITIVE);
                    return Ok(FixedPoint {
                        construction: c,
                        perturbation,
                        differences,
                        ratios,
                        halvings,
                        residual,
                    });
                }
                Err(e @ (Error::FixedPointFailed(_) | Error::BlowUp { .. })) => {
                    failures.push(format!("tau_end = {:.4}: {e}", c.config.tau_end));
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::FixedPointFailed(format!(
            "no contraction after {} halvings: {}",
            self.config.max_halvings,
            failures.join("; ")
        )))
    }

    /// Nonlinear perturbation `X = Ξ − βΞ₀` from `X(tau_start) = Ξ^lim(tau_start)`.
    pub fn direct_unstable_trajectory(&self) -> Result<Trajectory> {
        let dynamics = self.dynamics.clone().with_nonlinearity();
        self.march(dynamics, self.xlim(self.config.tau_start))
    }

    /// `X − Ξ^lim` at the stored nodes.
    pub fn remove_xlim(&self, x: &Trajectory) -> Result<Trajectory> {
        let lim = Trajectory::new(x.tau0, x.dtau, x.taus().iter().map(|&t| self.xlim(t)).collect())?;
        x.difference(&lim)
    }

    /// Slope and `r²` of `ln‖Y‖_{H^N}` against τ on `[lo, hi]`.
    pub fn decay_fit(&self, y: &Trajectory, lo: f64, hi: f64) -> (f64, f64) {
        let n = self.config.sobolev_order;
        let (t, v): (Vec<f64>, Vec<f64>) = y
            .taus()
            .into_iter()
            .zip(&y.states)
            .filter(|(t, _)| *t >= lo - 1e-9 && *t <= hi + 1e-9)
            .map(|(t, x)| (t, norms(x, n).h_norm(n).ln()))
            .filter(|(_, v)| v.is_finite())
            .unzip();
        if t.len() < 3 {
            return (f64::NAN, 0.0);
        }
        let (slope, _, r2) = linear_fit(&t, &v);
        (slope, r2)
    }

    /// `‖(X_dir − Ξ^lim) − Ξ^per‖_𝕏 / ‖Ξ^per‖_𝕏` over the last e-folding.
    pub fn reconstruction_gap(&self, direct: &Trajectory, per: &Trajectory) -> Result<f64> {
        let gap = self.remove_xlim(direct)?.difference(per)?;
        let lo = self.config.tau_end - 1.0 / self.config.a;
        let tail = |y: &Trajectory| -> Result<Trajectory> {
            let keep: Vec<usize> = (0..y.len()).filter(|&k| y.tau0 + k as f64 * y.dtau >= lo - 1e-9).collect();
            let first = keep[0];
            Trajectory::new(y.tau0 + first as f64 * y.dtau, y.dtau, keep.iter().map(|&k| y.states[k].clone()).collect())
        };
        Ok(self.x_norm(&tail(&gap)?) / self.x_norm(&tail(per)?).max(f64::MIN_POSITIVE))
    }

}

impl FixedPoint {
    /// `X = Ξ^lim + Ξ^per` at the stored nodes.
    pub fn total_perturbation(&self) -> Result<Trajectory> {
        let p = &self.perturbation;
        let states = p
            .taus()
            .iter()
            .zip(&p.states)
            .map(|(&t, x)| AxiField::combination(&[(1.0, &self.construction.xlim(t)), (1.0, x)]))
            .collect();
        Trajectory::new(p.tau0, p.dtau, states)
    }

    pub fn summary(&self) -> ConstructionSummary {
        let (fp, c) = (self, &self.construction);
        let a = c.config.a;
        let (decay_slope, decay_r2) = c.decay_fit(&fp.perturbation, c.config.tau_end - 2.0 / a, c.config.tau_end);
        let n = c.config.sobolev_order;
        let lim_norm = norms(&c.eta, n).h_norm(n) * c.config.amplitude;
        let hierarchy_holds = fp
            .perturbation
            .taus()
            .iter()
            .zip(&fp.perturbation.states)
            .all(|(&t, x)| norms(x, n).h_norm(n) <= lim_norm * (a * t).exp());
        ConstructionSummary {
            beta: c.config.beta,
            a,
            epsilon0: c.epsilon0(),
            amplitude: c.config.amplitude,
            tau_start: c.config.tau_start,
            tau_end: c.config.tau_end,
            dt: c.dt(),
            stored_dtau: c.stored_dtau(),
            halvings: fp.halvings,
            differences: fp.differences.clone(),
            ratios: fp.ratios.clone(),
            max_ratio: fp.ratios.iter().copied().fold(0.0, f64::max),
            residual: fp.residual,
            decay_slope,
            decay_r2,
            hierarchy_holds,
            x_norm: c.x_norm(&fp.perturbation),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::axi_fields::{GridRZ, ZTopology};
    use crate::evolution::{explicit_frequency, propagator_eigs, random_solenoidal, ArnoldiConfig, EvolutionConfig};
    use crate::profiles::ProfileSpec;
    use std::sync::OnceLock;

    pub(crate) const BETA: f64 = 50.0;
    pub(crate) const EPS: f64 = 0.5;

    /// Leading real eigenpair on a coarse grid, shared by the tests.
    pub(crate) fn eigenpair() -> &'static (Dynamics, AxiField, f64) {
        static CELL: OnceLock<(Dynamics, AxiField, f64)> = OnceLock::new();
        CELL.get_or_init(|| {
            let g = GridRZ::new(16, 16, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
            let spec = ProfileSpec::default_mri(EPS);
            let probe = EvolutionConfig::similarity(1.0, 1.0, EPS, BETA);
            let dt = 0.9 / explicit_frequency(&g, &spec.evaluator().unwrap(), &probe);
            let dynamics = Dynamics::linear(&g, &spec, EvolutionConfig::similarity(dt, 1.0, EPS, BETA)).unwrap();
            let integ = Integrator::new(dynamics.clone()).unwrap();
            let x0 = random_solenoidal(&g, Frame::Similarity, 1).unwrap();
            let cfg = ArnoldiConfig {
                horizon: 0.5,
                krylov_dim: 20,
                tol: 1e-9,
                ..Default::default()
            };
            let eig = propagator_eigs(&integ, &x0, &cfg).unwrap();
            let lead = eig.leading();
            assert!(lead.re > 0.0 && lead.im == 0.0, "{} {}", lead.re, lead.im);
            (dynamics, lead.mode.clone().unwrap(), lead.re)
        })
    }

    pub(crate) fn construction(tau_end: f64, amplitude: f64) -> Construction {
        let (dynamics, eta, a) = eigenpair();
        let cfg = ConstructionConfig {
            amplitude,
            ..ConstructionConfig::new(BETA, *a, tau_end - 5.0 / a, tau_end)
        };
        Construction::new(dynamics.clone(), eta.clone(), cfg).unwrap()
    }

    #[test]
    fn config_reports_every_violation() {
        let cfg = ConstructionConfig {
            max_ratio: 1.5,
            ..ConstructionConfig::new(25.0, -0.1, -1.0, 0.0)
        };
        let v = cfg.violations();
        assert!(v.iter().any(|s| s.starts_with("a =")));
        assert!(v.iter().any(|s| s.starts_with("max_ratio")));
        assert!(v.iter().any(|s| s.starts_with("epsilon0")));
        let ok = ConstructionConfig::new(25.0, 0.5, -10.0, 0.0);
        assert!(ok.violations().is_empty());
        assert_eq!(ok.epsilon0(), 0.25);
    }

    #[test]
    fn zero_amplitude_gives_zero_perturbation() {
        let c = construction(0.0, 0.0);
        assert_eq!(c.x_norm(&c.duhamel_map(None).unwrap()), 0.0);
        let direct = c.direct_unstable_trajectory().unwrap();
        assert!(direct.states.iter().all(|x| x.max_abs() == 0.0));
    }

    #[test]
    fn pure_mode_source_response_decays_at_twice_the_rate() {
        let c = construction(0.0, 1.0);
        let a = c.config.a;
        let y = c.duhamel_map(None).unwrap();
        let (slope, r2) = c.decay_fit(&y, -2.0 / a, 0.0);
        assert!((slope - 2.0 * a).abs() < 0.05 * 2.0 * a && r2 > 0.99, "{slope} vs {}", 2.0 * a);
    }

    #[test]
    fn fixed_point_contracts_and_matches_direct_evolution() {
        let c = construction(0.0, 1.0);
        let fp = c.fixed_point().unwrap();
        let s = fp.summary();
        assert!(s.max_ratio < 0.5, "{:?}", s.ratios);
        assert!(s.residual <= 1e-9, "{}", s.residual);
        assert!(s.decay_slope >= 1.5 * s.a, "{} vs a = {}", s.decay_slope, s.a);
        assert!(s.hierarchy_holds);
        let tuned = &fp.construction;
        // second start from the first Duhamel image
        let first = tuned.duhamel_map(None).unwrap();
        let (other, _, _) = tuned.iterate(Some(first)).unwrap();
        let gap = tuned.x_norm(&other.difference(&fp.perturbation).unwrap()) / tuned.x_norm(&fp.perturbation);
        assert!(gap < 1e-8, "{gap:e}");
        let direct = tuned.direct_unstable_trajectory().unwrap();
        let rec = tuned.reconstruction_gap(&direct, &fp.perturbation).unwrap();
        assert!(rec < 0.02, "{rec}");
    }

    #[test]
    fn contraction_improves_with_earlier_window() {
        let c = construction(0.0, 1.0);
        let a = c.config.a;
        let (_, _, r0) = c.iterate(None).unwrap();
        let (_, _, r1) = c.shifted(-1.0 / a).iterate(None).unwrap();
        assert!(r1[0] < r0[0], "{r0:?} {r1:?}");
    }

    #[test]
    fn early_direct_window_follows_the_mode() {
        let c = construction(0.0, 1.0);
        let a = c.config.a;
        let direct = c.direct_unstable_trajectory().unwrap();
        let lo = c.config.tau_start;
        let (slope, r2) = c.decay_fit(&direct, lo, lo + 1.0 / a);
        let n3 = norms(&c.eta, 3).h_norm(3);
        let first = norms(&direct.states[0], 3).h_norm(3);
        assert!((first / (a * lo).exp() - n3).abs() < 1e-12 * n3);
        assert!((slope - a).abs() < 0.01 * a && r2 > 0.999, "{slope} vs {a}");
    }
}
