use nalgebra::DMatrix;

use super::grid::{GridRZ, ZClass};
use crate::linalg::Tridiagonal;

/// Result of `recover_from_potentials`: poloidal pairs from flux and stream
/// functions, radial components at faces and axial ones at centres.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub b_r: DMatrix<f64>,
    pub b_z: DMatrix<f64>,
    pub u_r: DMatrix<f64>,
    pub u_z: DMatrix<f64>,
}

impl GridRZ {
    /// Applies a radial tridiagonal operator along every axial row.
    pub fn apply_radial(&self, t: &Tridiagonal, f: &DMatrix<f64>) -> DMatrix<f64> {
        let n = t.len();
        debug_assert_eq!(f.ncols(), n);
        let mut out = DMatrix::zeros(f.nrows(), n);
        for i in 0..n {
            let mut col = out.column_mut(i);
            col.axpy(t.diag[i], &f.column(i), 0.0);
            if i > 0 {
                col.axpy(t.lower[i - 1], &f.column(i - 1), 1.0);
            }
            if i + 1 < n {
                col.axpy(t.upper[i], &f.column(i + 1), 1.0);
            }
        }
        out
    }

    /// `∂_z f`; the result belongs to `class.other()`.
    pub fn dz_of(&self, f: &DMatrix<f64>, class: ZClass) -> DMatrix<f64> {
        &self.basis(class).dz * f
    }

    /// `∂_z² f` within `class`.
    pub fn dzz_of(&self, f: &DMatrix<f64>, class: ZClass) -> DMatrix<f64> {
        &self.basis(class).dzz * f
    }

    pub fn to_spectral(&self, f: &DMatrix<f64>, class: ZClass) -> DMatrix<f64> {
        &self.basis(class).forward * f
    }

    pub fn from_spectral(&self, c: &DMatrix<f64>, class: ZClass) -> DMatrix<f64> {
        &self.basis(class).inverse * c
    }

    /// `∂_r f` at centres: central differences, parity ghost at the axis and a
    /// one-sided second-order stencil at the outer centre.
    pub fn dr_centre(&self, f: &DMatrix<f64>, odd: bool) -> DMatrix<f64> {
        let n = self.n_r;
        let h = self.dr;
        let mut out = DMatrix::zeros(f.nrows(), n);
        for i in 0..n {
            let mut col = out.column_mut(i);
            if i == 0 {
                // ghost f₋₁ = ∓f₀
                col.axpy(0.5 / h, &f.column(1), 0.0);
                col.axpy(if odd { 0.5 / h } else { -0.5 / h }, &f.column(0), 1.0);
            } else if i + 1 < n {
                col.axpy(0.5 / h, &f.column(i + 1), 0.0);
                col.axpy(-0.5 / h, &f.column(i - 1), 1.0);
            } else {
                col.axpy(1.5 / h, &f.column(i), 0.0);
                col.axpy(-2.0 / h, &f.column(i - 1), 1.0);
                col.axpy(0.5 / h, &f.column(i - 2), 1.0);
            }
        }
        out
    }

    /// Face values averaged to centres (zero on the axis and outer faces).
    pub fn face_to_centre(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_r;
        let mut out = DMatrix::zeros(f.nrows(), n);
        for i in 0..n {
            let mut col = out.column_mut(i);
            if i > 0 {
                col.axpy(0.5, &f.column(i - 1), 1.0);
            }
            if i + 1 < n {
                col.axpy(0.5, &f.column(i), 1.0);
            }
        }
        out
    }

    /// Centre values averaged to interior faces.
    pub fn centre_to_face(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.n_faces();
        let mut out = DMatrix::zeros(f.nrows(), nf);
        for i in 0..nf {
            let mut col = out.column_mut(i);
            col.axpy(0.5, &f.column(i), 0.0);
            col.axpy(0.5, &f.column(i + 1), 1.0);
        }
        out
    }

    /// Central `∂_r` of a face field at faces (zero beyond the ends).
    pub fn dr_face(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.n_faces();
        let h = self.dr;
        let mut out = DMatrix::zeros(f.nrows(), nf);
        for i in 0..nf {
            let mut col = out.column_mut(i);
            if i + 1 < nf {
                col.axpy(0.5 / h, &f.column(i + 1), 1.0);
            }
            if i > 0 {
                col.axpy(-0.5 / h, &f.column(i - 1), 1.0);
            }
        }
        out
    }

    /// `(p_{i+1} − p_i)/h` at interior faces.
    pub fn grad_r(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let nf = self.n_faces();
        let h = self.dr;
        let mut out = DMatrix::zeros(p.nrows(), nf);
        for i in 0..nf {
            let mut col = out.column_mut(i);
            col.axpy(1.0 / h, &p.column(i + 1), 0.0);
            col.axpy(-1.0 / h, &p.column(i), 1.0);
        }
        out
    }

    /// `(1/r)∂_r(r u_r)` at centres from face values.
    pub fn div_r(&self, u_r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_r;
        let h = self.dr;
        let mut out = DMatrix::zeros(u_r.nrows(), n);
        for i in 0..n {
            let c = 1.0 / (self.r_c[i] * h);
            let mut col = out.column_mut(i);
            if i + 1 < n {
                col.axpy(c * self.r_f[i], &u_r.column(i), 1.0);
            }
            if i > 0 {
                col.axpy(-c * self.r_f[i - 1], &u_r.column(i - 1), 1.0);
            }
        }
        out
    }

    /// Discrete `(1/r)∂_r(r u_r) + ∂_z u_z`, lying in `uz_class.other()`.
    pub fn divergence(&self, u_r: &DMatrix<f64>, u_z: &DMatrix<f64>, uz_class: ZClass) -> DMatrix<f64> {
        self.div_r(u_r) + self.dz_of(u_z, uz_class)
    }

    /// `(∂_zφ/r` at faces, `−∂_rφ/r` at centres`)` for a face flux function of
    /// the given class.
    pub fn pair_from_potential(&self, psi: &DMatrix<f64>, class: ZClass) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut radial = self.dz_of(psi, class);
        for (i, &r) in self.r_f.iter().enumerate() {
            radial.column_mut(i).scale_mut(1.0 / r);
        }
        let n = self.n_r;
        let h = self.dr;
        let mut axial = DMatrix::zeros(psi.nrows(), n);
        for i in 0..n {
            let c = -1.0 / (h * self.r_c[i]);
            let mut col = axial.column_mut(i);
            if i + 1 < n {
                col.axpy(c, &psi.column(i), 1.0);
            }
            if i > 0 {
                col.axpy(-c, &psi.column(i - 1), 1.0);
            }
        }
        (radial, axial)
    }

    /// `(B_r, B_z)` from the stored flux function.
    pub fn field_from_flux(&self, phi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.pair_from_potential(phi, super::field::PHI_CLASS)
    }

    /// `B = (∂_zφ/r, −∂_rφ/r)` and `u = (∂_zχ/r, −∂_rχ/r)`; both pairs are
    /// discretely divergence-free for the staggered stencil.
    pub fn recover_from_potentials(&self, phi: &DMatrix<f64>, chi: &DMatrix<f64>) -> Recovered {
        let (b_r, b_z) = self.pair_from_potential(phi, super::field::PHI_CLASS);
        let (u_r, u_z) = self.pair_from_potential(chi, super::field::U_Z_CLASS);
        Recovered { b_r, b_z, u_r, u_z }
    }
}

#[cfg(test)]
mod tests {
    use super::super::grid::ZTopology;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flux_recovery_is_exact_and_solenoidal() {
        let g = GridRZ::new(32, 16, 4.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
        let phi = g.sample_face(|r, z| r * r * z.sin());
        let rec = g.recover_from_potentials(&phi, &phi);
        for j in 0..g.n_z {
            for i in 0..g.n_faces() {
                let expect = g.r_f[i] * g.z[j].cos();
                assert!((rec.b_r[(j, i)] - expect).abs() < 1e-12);
            }
            // interior cells do not see the zero outer face
            for i in 0..g.n_r - 1 {
                assert!((rec.b_z[(j, i)] + 2.0 * g.z[j].sin()).abs() < 1e-12);
            }
        }
        let div = g.divergence(&rec.b_r, &rec.b_z, ZClass::Dirichlet);
        assert!(div.amax() < 1e-13);
    }

    #[test]
    fn uniform_field_from_background_flux() {
        let g = GridRZ::new(16, 8, 2.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
        let eps = 0.05;
        let phi = g.sample_face(|r, _| -eps * r * r / 2.0);
        let (b_r, b_z) = g.field_from_flux(&phi);
        assert!(b_r.amax() < 1e-15);
        for i in 0..g.n_r - 1 {
            assert!((b_z[(0, i)] - eps).abs() < 1e-14);
        }
    }

    #[test]
    fn centre_derivative_second_order() {
        let err = |n: usize| {
            let g = GridRZ::new(n, 2, 3.0, ZTopology::Periodic { period: 1.0 }).unwrap();
            let f = g.sample_centre(|r, _| r * (-r * r).exp());
            let d = g.dr_centre(&f, true);
            (0..n)
                .map(|i| {
                    let r = g.r_c[i];
                    (d[(0, i)] - (1.0 - 2.0 * r * r) * (-r * r).exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        let order = (err(64) / err(128)).log2();
        assert!(order > 1.8, "{order}");
    }
}
