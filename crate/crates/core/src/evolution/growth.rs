use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axi_fields::{l2_magnetic, l2_velocity, AxiField, Frame, GridRZ, ZClass, ZTopology, PHI_CLASS, U_Z_CLASS};
use crate::error::Result;
use crate::linalg::linear_fit;

use super::integrator::Integrator;

/// Minimum `r²` for a fit to count as converged.
pub const MIN_R2: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub t: f64,
    pub l2_velocity: f64,
    pub l2_magnetic: f64,
    pub div_residual: f64,
    /// `ln‖X(t)‖` including all renormalizations
    pub log_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub window: [f64; 2],
    pub r2: f64,
    pub converged: bool,
    pub mode_norm_history: Vec<TimeSample>,
}

impl GrowthFit {
    /// Refits the stored history over another window.
    pub fn refit(&self, window: [f64; 2]) -> GrowthFit {
        let mut out = fit_history(&self.mode_norm_history, window);
        out.mode_norm_history = self.mode_norm_history.clone();
        out
    }

    pub fn write_time_series(&self, path: &Path) -> Result<()> {
        write_time_series(path, &self.mode_norm_history)
    }
}

pub fn write_time_series(path: &Path, samples: &[TimeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "l2_velocity", "l2_magnetic", "div_residual"])?;
    for s in samples {
        w.write_record([
            format!("{:e}", s.t),
            format!("{:e}", s.l2_velocity),
            format!("{:e}", s.l2_magnetic),
            format!("{:e}", s.div_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `‖(u, B)‖_{L²}`.
pub fn state_norm(x: &AxiField) -> f64 {
    l2_velocity(x).hypot(l2_magnetic(x))
}

fn fit_history(history: &[TimeSample], window: [f64; 2]) -> GrowthFit {
    let (t, y): (Vec<f64>, Vec<f64>) = history
        .iter()
        .filter(|s| s.t >= window[0] - 1e-12 && s.t <= window[1] + 1e-12)
        .map(|s| (s.t, s.log_norm))
        .unzip();
    let (rate, _, r2) = if t.len() >= 3 {
        linear_fit(&t, &y)
    } else {
        (f64::NAN, f64::NAN, 0.0)
    };
    GrowthFit {
        rate,
        window,
        r2,
        converged: r2 >= MIN_R2 && rate.is_finite(),
        mode_norm_history: Vec::new(),
    }
}

/// Evolves `initial` to the configured end time, recording the L² history,
/// and fits the log-linear slope over `window`. Returns the fit and the final
/// (renormalized) state.
pub fn measure_growth_with_state(initial: &AxiField, integ: &Integrator, window: [f64; 2]) -> Result<(GrowthFit, AxiField)> {
    let cadence = integ.dynamics.config.renormalize_every.max(1);
    let sample_every = (cadence / 10).max(1);
    let mut history = Vec::new();
    let mut log_scale = 0.0;
    let mut x = initial.clone();
    let record = |t: f64, x: &AxiField, log_scale: f64, history: &mut Vec<TimeSample>| {
        let (lv, lm) = (l2_velocity(x), l2_magnetic(x));
        let s = (log_scale).exp();
        history.push(TimeSample {
            t,
            l2_velocity: lv * s,
            l2_magnetic: lm * s,
            div_residual: x.divergence_residual() * s,
            log_norm: lv.hypot(lm).ln() + log_scale,
        });
    };
    record(0.0, &x, log_scale, &mut history);
    let n = integ.steps();
    for k in 0..n {
        let t = k as f64 * integ.dt;
        x = integ.step(&x, t)?;
        if (k + 1) % sample_every == 0 || k + 1 == n {
            record(t + integ.dt, &x, log_scale, &mut history);
        }
        if (k + 1) % cadence == 0 {
            let nrm = state_norm(&x);
            if nrm > 0.0 {
                x.scale(1.0 / nrm);
                log_scale += nrm.ln();
            }
        }
    }
    let mut fit = fit_history(&history, window);
    fit.mode_norm_history = history;
    Ok((fit, x))
}

pub fn measure_growth(initial: &AxiField, integ: &Integrator, window: [f64; 2]) -> Result<GrowthFit> {
    Ok(measure_growth_with_state(initial, integ, window)?.0)
}

/// Seeded smooth random state with divergence-free velocity (from a stream
/// function), unit L² norm.
pub fn random_solenoidal(grid: &std::sync::Arc<GridRZ>, frame: Frame, seed: u64) -> Result<AxiField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = match grid.topology {
        ZTopology::Periodic { .. } => f64::INFINITY,
        ZTopology::Truncated { z_max } => z_max / 4.0,
    };
    let r_env = (grid.r_max / 4.0).min(3.0);
    let random_field = |face: bool, odd_power: i32, class: ZClass, rng: &mut ChaCha8Rng| {
        let radii = if face { &grid.r_f } else { &grid.r_c };
        let n_modes = grid.n_z.min(16);
        let coef: Vec<[f64; 3]> = (0..n_modes)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let mut spec = nalgebra::DMatrix::zeros(grid.n_z, radii.len());
        for (s, c) in coef.iter().enumerate() {
            for (i, &r) in radii.iter().enumerate() {
                let x = r / r_env;
                spec[(s, i)] = (c[0] + c[1] * x * x + c[2] * x.powi(4)) * r.powi(odd_power) * (-x * x).exp();
            }
        }
        let mut f = grid.from_spectral(&spec, class);
        if width.is_finite() {
            for (j, &z) in grid.z.iter().enumerate() {
                f.row_mut(j).scale_mut((-(z / width).powi(2)).exp());
            }
        }
        f
    };
    let mut x = AxiField::zeros(grid, frame);
    let chi = random_field(true, 2, U_Z_CLASS, &mut rng);
    x.u_theta = random_field(false, 1, crate::axi_fields::U_THETA_CLASS, &mut rng);
    x.phi = random_field(true, 2, PHI_CLASS, &mut rng);
    x.b_theta = random_field(false, 1, crate::axi_fields::B_THETA_CLASS, &mut rng);
    let rec = grid.recover_from_potentials(&x.phi, &chi);
    x.u_r = rec.u_r;
    x.u_z = rec.u_z;
    x.project()?;
    let n = state_norm(&x);
    x.scale(1.0 / n);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::super::dynamics::{stabilizing_hyperdiffusion, Dynamics, EvolutionConfig};
    use super::*;
    use crate::profiles::ProfileSpec;
    use std::f64::consts::PI;

    #[test]
    fn random_state_is_reproducible_and_solenoidal() {
        let g = GridRZ::new(16, 8, 6.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
        let a = random_solenoidal(&g, Frame::Physical, 7).unwrap();
        let b = random_solenoidal(&g, Frame::Physical, 7).unwrap();
        assert_eq!(a.u_r, b.u_r);
        assert!(a.divergence_residual() < 1e-12);
        assert!((state_norm(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mri_profile_grows_and_strong_field_does_not() {
        let g = GridRZ::new(48, 32, 8.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
        let x0 = random_solenoidal(&g, Frame::Physical, 1).unwrap();
        let spec = ProfileSpec::default_mri(0.05);
        let integ = Integrator::new(Dynamics::linear(&g, &spec, EvolutionConfig::ideal(0.1, 60.0, 0.05)).unwrap()).unwrap();
        let fit = measure_growth(&x0, &integ, [30.0, 60.0]).unwrap();
        assert!(fit.rate > 0.05 && fit.converged, "{} {}", fit.rate, fit.r2);

        let spec = ProfileSpec::default_mri(10.0);
        let cfg = EvolutionConfig::ideal(0.004, 8.0, 10.0);
        let bare = Integrator::new(Dynamics::linear(&g, &spec, cfg.clone()).unwrap()).unwrap();
        let fit = measure_growth(&x0, &bare, [2.0, 8.0]).unwrap();
        assert!(fit.rate <= 2.0 * bare.dynamics.grid_tolerance(), "{}", fit.rate);
        let cfg = EvolutionConfig {
            hyperdiffusion: 2.0 * stabilizing_hyperdiffusion(0.004, 10.0),
            ..cfg
        };
        let damped = Integrator::new(Dynamics::linear(&g, &spec, cfg).unwrap()).unwrap();
        let fit = measure_growth(&x0, &damped, [2.0, 8.0]).unwrap();
        assert!(fit.rate <= 1e-3, "{}", fit.rate);
    }
}
