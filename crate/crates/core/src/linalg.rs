//! Small dense and tridiagonal kernels shared by the radial and field solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. `lower[i]` couples row `i + 1` to
/// column `i`, `upper[i]` couples row `i` to column `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// `self + alpha * other`, entrywise.
    pub fn axpy(&self, alpha: f64, other: &Tridiagonal) -> Tridiagonal {
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + alpha * y).collect();
        Tridiagonal {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
                m[(i + 1, i)] = self.lower[i];
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(l, u)| (l - u).abs() <= tol * l.abs().max(u.abs()).max(1.0))
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::new(self)
    }
}

/// LU factors of a tridiagonal matrix (Thomas algorithm without pivoting).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    upper: Vec<f64>,
    // reciprocal pivots
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(m: &Tridiagonal) -> Result<Self> {
        let n = m.len();
        let mut inv_pivot = vec![0.0; n];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        let mut prev = 0.0;
        for i in 0..n {
            let mut p = m.diag[i];
            if i > 0 {
                mult[i - 1] = m.lower[i - 1] * prev;
                p -= mult[i - 1] * m.upper[i - 1];
            }
            if p == 0.0 || !p.is_finite() {
                return Err(Error::SolveFailed(format!("zero pivot at row {i}")));
            }
            prev = 1.0 / p;
            inv_pivot[i] = prev;
        }
        Ok(Self {
            lower: mult,
            upper: m.upper.clone(),
            inv_pivot,
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.inv_pivot.len();
        for i in 1..n {
            b[i] -= self.lower[i - 1] * b[i - 1];
        }
        b[n - 1] *= self.inv_pivot[n - 1];
        for i in (0..n.saturating_sub(1)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1]) * self.inv_pivot[i];
        }
    }
}

/// Outcome of a symmetric LDLᵀ inertia count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Sylvester inertia of a symmetric tridiagonal matrix through the pivots
/// of its LDLᵀ factorization. Returns `None` on breakdown (a pivot that is
/// exactly zero or too small relative to the row scale).
pub fn tridiagonal_inertia(m: &Tridiagonal) -> Option<Inertia> {
    let n = m.len();
    let mut inertia = Inertia {
        negative: 0,
        zero: 0,
        positive: 0,
    };
    let mut d_prev = 0.0;
    for i in 0..n {
        let scale = m.diag[i].abs()
            + if i > 0 { m.lower[i - 1].abs() } else { 0.0 }
            + if i + 1 < n { m.upper[i].abs() } else { 0.0 };
        let d = if i == 0 {
            m.diag[0]
        } else {
            m.diag[i] - m.lower[i - 1] * m.upper[i - 1] / d_prev
        };
        if !d.is_finite() || d.abs() <= 64.0 * f64::EPSILON * scale {
            return None;
        }
        if d < 0.0 {
            inertia.negative += 1;
        } else {
            inertia.positive += 1;
        }
        d_prev = d;
    }
    Some(inertia)
}

/// All eigenvalues (ascending) of the symmetric-definite pencil `K x = λ M x`
/// by Cholesky reduction to a standard symmetric problem.
pub fn generalized_symmetric_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (vals, _) = generalized_symmetric_eigen(k, m, false)?;
    Ok(vals)
}

/// Eigenpairs of `K x = λ M x`, ascending; eigenvectors are M-orthonormal
/// columns when requested.
pub fn generalized_symmetric_eigen(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
    vectors: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolveFailed("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let linv_k = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::SolveFailed("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| Error::SolveFailed("triangular solve failed".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    if !vectors {
        let mut vals: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        return Ok((vals, None));
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = if vectors {
        let lt = l.transpose();
        let mut out = DMatrix::zeros(k.nrows(), order.len());
        for (j, &i) in order.iter().enumerate() {
            let y: DVector<f64> = eig.eigenvectors.column(i).into_owned();
            let x = lt
                .solve_upper_triangular(&y)
                .ok_or_else(|| Error::SolveFailed("back substitution failed".into()))?;
            out.set_column(j, &x);
        }
        Some(out)
    } else {
        None
    };
    Ok((vals, vecs))
}

/// Least-squares fit `y ≈ intercept + slope x`; returns (slope, intercept, r²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal {
        Tridiagonal {
            lower: vec![-1.0, -1.0, -1.0],
            diag: vec![2.0, 2.0, 2.0, 2.0],
            upper: vec![-1.0, -1.0, -1.0],
        }
    }

    #[test]
    fn thomas_solves_poisson_matrix() {
        let m = sample();
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = m.matvec(&x);
        m.factor().unwrap().solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn inertia_matches_shifted_spectrum() {
        // eigenvalues of the 1-D Laplacian are 2 - 2cos(jπ/5)
        let m = sample();
        let shift = Tridiagonal {
            lower: vec![0.0; 3],
            diag: vec![-1.5; 4],
            upper: vec![0.0; 3],
        };
        let shifted = m.axpy(1.0, &shift);
        let inertia = tridiagonal_inertia(&shifted).unwrap();
        let expected = (1..=4)
            .filter(|j| 2.0 - 2.0 * (*j as f64 * std::f64::consts::PI / 5.0).cos() < 1.5)
            .count();
        assert_eq!(inertia.negative, expected);
    }

    #[test]
    fn zero_pivot_is_breakdown() {
        let m = Tridiagonal {
            lower: vec![1.0],
            diag: vec![0.0, 1.0],
            upper: vec![1.0],
        };
        assert!(tridiagonal_inertia(&m).is_none());
    }

    #[test]
    fn generalized_pencil_with_identity_mass() {
        let k = sample().to_dense();
        let m = DMatrix::identity(4, 4) * 2.0;
        let vals = generalized_symmetric_eigenvalues(&k, &m).unwrap();
        let lowest = (2.0 - 2.0 * (std::f64::consts::PI / 5.0).cos()) / 2.0;
        assert!((vals[0] - lowest).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, c, r2) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
