use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::axi_fields::AxiField;
use crate::error::{Error, Result};

use super::integrator::Integrator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArnoldiConfig {
    /// initial propagator horizon `T`
    pub horizon: f64,
    pub krylov_dim: usize,
    pub n_modes: usize,
    /// relative Ritz residual required for convergence
    pub tol: f64,
    pub max_restarts: usize,
    /// target spectral radius of the propagator
    pub target_multiplier: f64,
}

impl Default for ArnoldiConfig {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            krylov_dim: 12,
            n_modes: 1,
            tol: 1e-6,
            max_restarts: 12,
            target_multiplier: 10.0,
        }
    }
}

/// Generator eigenvalue `λ = log(μ)/T` from a propagator Ritz value `μ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenMode {
    pub re: f64,
    pub im: f64,
    pub multiplier: [f64; 2],
    pub residual: f64,
    /// unit-L² real eigenfunction (real Ritz values only)
    #[serde(skip)]
    pub mode: Option<AxiField>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub modes: Vec<EigenMode>,
    pub horizon: f64,
    pub restarts: usize,
    pub applications: usize,
    /// largest `|μ|` in the final Krylov space
    pub max_multiplier: f64,
}

impl EigenResult {
    pub fn leading(&self) -> &EigenMode {
        &self.modes[0]
    }
}

struct Ritz {
    mu: Complex<f64>,
    y: DVector<Complex<f64>>,
    residual: f64,
}

/// Ritz pairs of the `m × m` Hessenberg block, sorted by decreasing `|μ|`.
fn ritz_pairs(h: &DMatrix<f64>, m: usize) -> Vec<Ritz> {
    let hm = h.view((0, 0), (m, m)).into_owned();
    let beta = h[(m, m - 1)].abs();
    let vals = hm.clone().complex_eigenvalues();
    let hc: DMatrix<Complex<f64>> = hm.map(|v| Complex::new(v, 0.0));
    let mut out: Vec<Ritz> = vals
        .iter()
        .map(|&mu| {
            // inverse iteration on the slightly perturbed shift
            let shift = mu + Complex::new(1e-12 * mu.norm().max(1e-300), 1e-13 * mu.norm().max(1e-300));
            let mut a = hc.clone();
            for i in 0..m {
                a[(i, i)] -= shift;
            }
            let lu = a.lu();
            let mut y = DVector::from_element(m, Complex::new(1.0, 0.0));
            for _ in 0..3 {
                if let Some(s) = lu.solve(&y) {
                    let n = s.norm();
                    if n.is_finite() && n > 0.0 {
                        y = s / Complex::new(n, 0.0);
                    }
                }
            }
            let residual = beta * y[m - 1].norm() / mu.norm().max(1e-300);
            Ritz { mu, y, residual }
        })
        .collect();
    out.sort_by(|a, b| b.mu.norm().total_cmp(&a.mu.norm()));
    out
}

fn combine(basis: &[AxiField], coef: impl Iterator<Item = f64>) -> AxiField {
    let mut out = AxiField::zeros(&basis[0].grid, basis[0].frame);
    for (v, c) in basis.iter().zip(coef) {
        out.axpy(c, v);
    }
    out
}

fn normalize(x: &mut AxiField) -> f64 {
    let n = x.dot(x).sqrt();
    if n > 0.0 {
        x.scale(1.0 / n);
    }
    n
}

/// Dominant eigenvalues of the generator from explicitly restarted Arnoldi on
/// the time-`T` propagator of a linear autonomous integrator.
pub fn propagator_eigs(integ: &Integrator, start: &AxiField, cfg: &ArnoldiConfig) -> Result<EigenResult> {
    if !integ.dynamics.is_linear() {
        return Err(Error::InvalidArgument("propagator_eigs needs linear autonomous dynamics".into()));
    }
    let m = cfg.krylov_dim.max(cfg.n_modes + 2);
    let mut steps = ((cfg.horizon / integ.dt).round() as usize).max(1);
    let mut v0 = start.clone();
    v0.project()?;
    normalize(&mut v0);
    let mut applications = 0;
    let mut adapted = false;
    let mut last_residual = f64::INFINITY;
    for restart in 0..=cfg.max_restarts {
        let horizon = steps as f64 * integ.dt;
        let mut basis = vec![v0.clone()];
        let mut h = DMatrix::zeros(m + 1, m);
        let mut dim = m;
        for j in 0..m {
            let mut w = integ.run(&basis[j], 0.0, steps, |_, _, _| {})?;
            applications += 1;
            // modified Gram–Schmidt, twice
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = b.dot(&w);
                    h[(i, j)] += c;
                    w.axpy(-c, b);
                }
            }
            let nrm = normalize(&mut w);
            h[(j + 1, j)] = nrm;
            if nrm <= 1e-14 * h.view((0, j), (j + 1, 1)).norm() {
                dim = j + 1;
                break;
            }
            basis.push(w);
        }
        let hm = h.view((0, 0), (dim + 1, dim)).into_owned();
        let ritz = ritz_pairs(&hm, dim);
        let lead = &ritz[0];
        let log_mu = lead.mu.norm().ln();
        // retune the horizon once so that |μ| is near the target
        if !adapted && log_mu > 0.05 && restart < cfg.max_restarts {
            let target = cfg.target_multiplier.ln();
            if (log_mu - target).abs() > 0.5 * target {
                let factor = (target / log_mu).clamp(0.25, 4.0);
                steps = ((steps as f64 * factor).round() as usize).max(1);
                adapted = true;
                v0 = combine(&basis[..dim], lead.y.iter().map(|c| c.re + c.im));
                normalize(&mut v0);
                continue;
            }
        }
        let wanted = cfg.n_modes.min(ritz.len());
        let worst = ritz[..wanted].iter().map(|r| r.residual).fold(0.0, f64::max);
        last_residual = worst;
        if worst <= cfg.tol || restart == cfg.max_restarts {
            if worst > cfg.tol {
                return Err(Error::ArnoldiNotConverged {
                    restarts: restart,
                    residual: worst,
                });
            }
            let modes = ritz[..wanted]
                .iter()
                .map(|r| {
                    let lambda = r.mu.ln() / horizon;
                    let mode = (r.mu.im.abs() <= 1e-9 * r.mu.norm()).then(|| {
                        // real eigenvalue: take the dominant real combination
                        let re_norm: f64 = r.y.iter().map(|c| c.re * c.re).sum();
                        let im_norm: f64 = r.y.iter().map(|c| c.im * c.im).sum();
                        let pick_re = re_norm >= im_norm;
                        let mut x = combine(&basis[..dim], r.y.iter().map(|c| if pick_re { c.re } else { c.im }));
                        let n = super::growth::state_norm(&x);
                        x.scale(1.0 / n);
                        x
                    });
                    EigenMode {
                        re: lambda.re,
                        im: lambda.im,
                        multiplier: [r.mu.re, r.mu.im],
                        residual: r.residual,
                        mode,
                    }
                })
                .collect();
            return Ok(EigenResult {
                modes,
                horizon,
                restarts: restart,
                applications,
                max_multiplier: lead.mu.norm(),
            });
        }
        // restart from the sum of the wanted Ritz vectors
        let mut next = AxiField::zeros(&v0.grid, v0.frame);
        for r in &ritz[..wanted] {
            let mut x = combine(&basis[..dim], r.y.iter().map(|c| c.re + c.im));
            normalize(&mut x);
            next.axpy(1.0, &x);
        }
        normalize(&mut next);
        v0 = next;
    }
    Err(Error::ArnoldiNotConverged {
        restarts: cfg.max_restarts,
        residual: last_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::dynamics::{Dynamics, EvolutionConfig};
    use super::super::growth::{measure_growth, random_solenoidal};
    use super::*;
    use crate::axi_fields::{Frame, GridRZ, ZTopology};
    use crate::profiles::ProfileSpec;
    use std::f64::consts::PI;

    #[test]
    fn leading_mri_eigenvalue_is_real_and_reproduced_by_evolution() {
        let g = GridRZ::new(32, 16, 8.0, ZTopology::Periodic { period: 4.0 * PI }).unwrap();
        let spec = ProfileSpec::default_mri(0.1);
        let integ = Integrator::new(Dynamics::linear(&g, &spec, EvolutionConfig::ideal(0.1, 80.0, 0.1)).unwrap()).unwrap();
        let x0 = random_solenoidal(&g, Frame::Physical, 3).unwrap();
        let eig = propagator_eigs(&integ, &x0, &ArnoldiConfig::default()).unwrap();
        let lead = eig.leading();
        assert!(lead.re > 0.0);
        assert!(lead.im.abs() <= 1e-3 * lead.re, "{} {}", lead.re, lead.im);
        let mode = lead.mode.as_ref().unwrap();
        let fit = measure_growth(mode, &integ, [0.0, 20.0]).unwrap();
        assert!((fit.rate - lead.re).abs() < 0.02 * lead.re, "{} vs {}", fit.rate, lead.re);
    }

    #[test]
    fn heat_propagator_has_no_growing_multiplier() {
        let g = GridRZ::new(16, 12, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let spec = ProfileSpec::default_mri(0.2);
        let cfg = EvolutionConfig::similarity(0.02, 1.0, 0.2, 0.0);
        let integ = Integrator::new(Dynamics::linear(&g, &spec, cfg).unwrap()).unwrap();
        let x0 = random_solenoidal(&g, Frame::Similarity, 5).unwrap();
        let eig = propagator_eigs(&integ, &x0, &ArnoldiConfig { horizon: 1.0, ..Default::default() }).unwrap();
        assert!(eig.max_multiplier < 1.0);
        assert!(eig.leading().re <= -0.25 + 0.03, "{}", eig.leading().re);
    }
}
