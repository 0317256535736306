//! Linear finite-element pencils for the radial operators
//! `L_k = −(1/r)∂_r((1/r)∂_r ·) + k²/r² + 𝔉(r)` paired in `L²(r dr)`, their
//! negative inertia and the summed MRI certificate over axial wavenumbers.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigenvalues, tridiagonal_inertia, Tridiagonal};
use crate::profiles::{rayleigh_potential, RadialProfile};

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Dense cross-checks are skipped above this size.
pub const DENSE_ORACLE_LIMIT: usize = 2048;

/// Stiffness/mass pair on the interior nodes of a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPencil {
    /// Quadratic form `Q_k`.
    pub stiffness: Tridiagonal,
    /// `∫ φ² r dr`.
    pub mass: Tridiagonal,
    /// `∫ φ² / r dr`; `K(k) = K(0) + k²·weight`.
    pub inverse_r_mass: Tridiagonal,
    pub k: u32,
    pub n_dof: usize,
}

impl OperatorPencil {
    /// `K − σM` as a tridiagonal matrix.
    pub fn shifted(&self, sigma: f64) -> Tridiagonal {
        self.stiffness.axpy(-sigma, &self.mass)
    }

    /// Number of generalized eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> Option<usize> {
        tridiagonal_inertia(&self.shifted(sigma)).map(|i| i.negative)
    }

    /// The `index`-th generalized eigenvalue (0 = lowest) by Sylvester
    /// bisection on `K − σM`.
    pub fn eigenvalue(&self, index: usize) -> Result<f64> {
        if index >= self.n_dof {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue index {index} out of range for {} dofs",
                self.n_dof
            )));
        }
        let count = |s: f64| -> usize {
            // a breakdown means σ is (numerically) an eigenvalue; nudge it
            self.count_below(s)
                .or_else(|| self.count_below(s * (1.0 + 1e-14) + 1e-300))
                .unwrap_or(0)
        };
        let mut lo = -1.0;
        while count(lo) > index {
            lo *= 4.0;
            if !lo.is_finite() {
                return Err(Error::SolveFailed("bisection lower bound diverged".into()));
            }
        }
        let mut hi = 1.0;
        while count(hi) <= index {
            hi *= 4.0;
            if !hi.is_finite() {
                return Err(Error::SolveFailed("bisection upper bound diverged".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Generalized eigenvalues by dense Cholesky reduction, ascending.
    pub fn dense_eigenvalues(&self) -> Result<Vec<f64>> {
        generalized_symmetric_eigenvalues(&self.stiffness.to_dense(), &self.mass.to_dense())
    }
}

/// Negative inertia of one pencil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaResult {
    pub k: u32,
    pub n_neg: usize,
    /// Lowest (up to) five generalized eigenvalues.
    pub min_eigs: Vec<f64>,
    pub resolution: usize,
    /// Negative count from the dense eigensolve, when it ran.
    pub dense_n_neg: Option<usize>,
    /// LDLᵀ broke down and the dense count was used instead.
    pub fallback: bool,
}

impl InertiaResult {
    pub fn lambda_min(&self) -> f64 {
        self.min_eigs.first().copied().unwrap_or(f64::NAN)
    }

    /// Both counting paths agree (vacuously true when only one ran).
    pub fn consistent(&self) -> bool {
        self.dense_n_neg.is_none_or(|d| d == self.n_neg)
    }
}

/// Assembles `Q_k` and the `r dr` mass with linear elements on `grid`, with
/// homogeneous Dirichlet conditions at both ends. `potential` is given at
/// the grid nodes and interpolated linearly inside each element.
pub fn assemble_pencil(potential: &[f64], k: u32, grid: &[f64]) -> Result<OperatorPencil> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "k = 0 is excluded; axial wavenumbers start at 1".into(),
        ));
    }
    let n = grid.len();
    if n < 3 {
        return Err(Error::InvalidGrid("need at least 3 nodes".into()));
    }
    if potential.len() != n {
        return Err(Error::InvalidArgument(format!(
            "potential has {} values for {} nodes",
            potential.len(),
            n
        )));
    }
    if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(
            "radial nodes must be positive and strictly increasing".into(),
        ));
    }
    let m = n - 2;
    let mut base = Tridiagonal::zeros(m);
    let mut mass = Tridiagonal::zeros(m);
    let mut inv_r = Tridiagonal::zeros(m);

    for e in 0..n - 1 {
        let (a, b) = (grid[e], grid[e + 1]);
        let h = b - a;
        let (fa, fb) = (potential[e], potential[e + 1]);
        // element matrices indexed [local i][local j]
        let g = (b / a).ln() / (h * h);
        let mut km = [[g, -g], [-g, g]];
        let mut mm = [[0.0; 2]; 2];
        let mut wm = [[0.0; 2]; 2];
        for (x, w) in GAUSS3 {
            let t = 0.5 * (1.0 + x);
            let r = a + t * h;
            let nv = [1.0 - t, t];
            let f = fa * (1.0 - t) + fb * t;
            let jw = 0.5 * h * w;
            for i in 0..2 {
                for j in 0..2 {
                    let p = nv[i] * nv[j] * jw;
                    mm[i][j] += p * r;
                    wm[i][j] += p / r;
                    km[i][j] += p * f * r;
                }
            }
        }
        // global interior index of local node i
        let gi = |i: usize| -> Option<usize> {
            let node = e + i;
            (node >= 1 && node <= n - 2).then(|| node - 1)
        };
        for i in 0..2 {
            let Some(ii) = gi(i) else { continue };
            base.diag[ii] += km[i][i];
            mass.diag[ii] += mm[i][i];
            inv_r.diag[ii] += wm[i][i];
        }
        if let (Some(i0), Some(_)) = (gi(0), gi(1)) {
            base.upper[i0] += km[0][1];
            base.lower[i0] += km[1][0];
            mass.upper[i0] += mm[0][1];
            mass.lower[i0] += mm[1][0];
            inv_r.upper[i0] += wm[0][1];
            inv_r.lower[i0] += wm[1][0];
        }
    }
    let k2 = f64::from(k) * f64::from(k);
    Ok(OperatorPencil {
        stiffness: base.axpy(k2, &inv_r),
        mass,
        inverse_r_mass: inv_r,
        k,
        n_dof: m,
    })
}

/// Pencil built directly from a profile and ε on the profile's own grid.
pub fn pencil_for_profile(profile: &RadialProfile, epsilon: f64, k: u32) -> Result<OperatorPencil> {
    let f = rayleigh_potential(profile, epsilon)?;
    assemble_pencil(&f, k, &profile.r)
}

/// Negative inertia of `K` by LDLᵀ pivots, cross-checked against a dense
/// generalized eigensolve.
pub fn negative_count(pencil: &OperatorPencil) -> Result<InertiaResult> {
    let ldl = tridiagonal_inertia(&pencil.stiffness).map(|i| i.negative);
    let dense = if pencil.n_dof <= DENSE_ORACLE_LIMIT || ldl.is_none() {
        Some(pencil.dense_eigenvalues()?)
    } else {
        None
    };
    let dense_n_neg = dense.as_ref().map(|v| v.iter().filter(|&&x| x < 0.0).count());
    let (n_neg, fallback) = match ldl {
        Some(c) => (c, false),
        None => {
            log::warn!(
                "LDLᵀ breakdown at k = {}; using dense eigensolve count",
                pencil.k
            );
            (dense_n_neg.expect("dense ran on breakdown"), true)
        }
    };
    let n_low = pencil.n_dof.min(5);
    let min_eigs = match &dense {
        Some(v) => v[..n_low].to_vec(),
        None => (0..n_low)
            .map(|i| pencil.eigenvalue(i))
            .collect::<Result<_>>()?,
    };
    Ok(InertiaResult {
        k: pencil.k,
        n_neg,
        min_eigs,
        resolution: pencil.n_dof,
        dense_n_neg,
        fallback,
    })
}

/// Per-k inertia up to the truncation certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub per_k: Vec<InertiaResult>,
    pub total: usize,
    /// First k with `n⁻(L_k) = n⁻(L_{k+1}) = 0`.
    pub k_star: Option<u32>,
    pub epsilon: f64,
    pub n_dof: usize,
}

impl SpectrumSummary {
    pub fn all_consistent(&self) -> bool {
        self.per_k.iter().all(InertiaResult::consistent)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "n_neg", "lambda_min", "n_dof"])?;
        for r in &self.per_k {
            w.write_record([
                r.k.to_string(),
                r.n_neg.to_string(),
                format!("{:.17e}", r.lambda_min()),
                r.resolution.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let doc = serde_json::json!({
            "total": self.total,
            "k_star": self.k_star,
            "epsilon": self.epsilon,
            "n_dof": self.n_dof,
            "consistent": self.all_consistent(),
            "per_k": self.per_k,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

/// Sweeps `k = 1..=k_cap`, stopping after two consecutive zero counts.
/// Wavenumbers are evaluated in parallel batches and merged in order.
pub fn total_negative_count(
    profile: &RadialProfile,
    epsilon: f64,
    k_cap: u32,
) -> Result<SpectrumSummary> {
    if k_cap < 2 {
        return Err(Error::InvalidArgument(format!(
            "k_cap must be >= 2 (got {k_cap})"
        )));
    }
    let potential = rayleigh_potential(profile, epsilon)?;
    let batch = rayon::current_num_threads().max(2) as u32;
    let mut per_k: Vec<InertiaResult> = Vec::new();
    let mut k_star = None;
    let mut next = 1u32;
    'sweep: while next <= k_cap {
        let hi = (next + batch - 1).min(k_cap);
        let results: Vec<InertiaResult> = (next..=hi)
            .into_par_iter()
            .map(|k| assemble_pencil(&potential, k, &profile.r).and_then(|p| negative_count(&p)))
            .collect::<Result<_>>()?;
        for r in results {
            if let Some(prev) = per_k.last() {
                if r.n_neg > prev.n_neg {
                    return Err(Error::MonotonicityViolation {
                        k_prev: prev.k,
                        n_prev: prev.n_neg,
                        k: r.k,
                        n: r.n_neg,
                    });
                }
                if prev.n_neg == 0 && r.n_neg == 0 {
                    k_star = Some(prev.k);
                    per_k.push(r);
                    break 'sweep;
                }
            }
            per_k.push(r);
        }
        next = hi + 1;
    }
    Ok(SpectrumSummary {
        total: per_k.iter().map(|r| r.n_neg).sum(),
        n_dof: profile.len().saturating_sub(2),
        per_k,
        k_star,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{eval_profile, geometric_grid, ProfileSpec};

    fn bump(grid: &[f64], depth: f64) -> Vec<f64> {
        grid.iter()
            .map(|&r| if (0.8..=1.2).contains(&r) { -depth } else { 0.0 })
            .collect()
    }

    #[test]
    fn rejects_k_zero() {
        let g = geometric_grid(12.0, 20, 1e-4);
        assert!(assemble_pencil(&vec![0.0; 20], 0, &g).is_err());
    }

    #[test]
    fn zero_and_positive_potentials_are_definite() {
        let g = geometric_grid(12.0, 200, 1e-4);
        for c in [0.0, 3.0] {
            for k in [1, 7] {
                let p = assemble_pencil(&vec![c; 200], k, &g).unwrap();
                assert!(p.stiffness.is_symmetric(0.0));
                let r = negative_count(&p).unwrap();
                assert_eq!(r.n_neg, 0);
                assert!(r.lambda_min() > 0.0);
                assert!(r.consistent());
            }
        }
    }

    #[test]
    fn well_potential_counts() {
        let g = geometric_grid(12.0, 400, 1e-4);
        let f = bump(&g, 100.0);
        let low = negative_count(&assemble_pencil(&f, 1, &g).unwrap()).unwrap();
        assert!(low.n_neg >= 1);
        assert_eq!(low.dense_n_neg, Some(low.n_neg));
        let high = negative_count(&assemble_pencil(&f, 200, &g).unwrap()).unwrap();
        assert_eq!(high.n_neg, 0);
        assert_eq!(high.dense_n_neg, Some(0));
    }

    #[test]
    fn bisection_matches_dense() {
        let g = geometric_grid(12.0, 150, 1e-4);
        let p = assemble_pencil(&bump(&g, 100.0), 2, &g).unwrap();
        let dense = p.dense_eigenvalues().unwrap();
        for i in 0..4 {
            let b = p.eigenvalue(i).unwrap();
            assert!((b - dense[i]).abs() <= 1e-9 * dense[i].abs().max(1.0));
        }
    }

    #[test]
    fn default_profile_sweep() {
        let g = geometric_grid(12.0, 514, 1e-4);
        let prof = eval_profile(&ProfileSpec::default_mri(0.05), &g).unwrap();
        let s = total_negative_count(&prof, 0.05, 32).unwrap();
        assert!(s.total >= 1);
        assert!(s.k_star.is_some_and(|k| k <= 32));
        assert!(s.all_consistent());
        let stable = total_negative_count(&prof, 10.0, 32).unwrap();
        assert_eq!(stable.total, 0);
        assert_eq!(stable.k_star, Some(1));
    }
}
