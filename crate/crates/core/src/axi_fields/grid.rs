use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

/// Axial topology of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZTopology {
    /// `z ∈ [0, period)`, no duplicated seam node.
    Periodic { period: f64 },
    /// Cell-centred `z ∈ (−z_max, z_max)` with sine/cosine expansions.
    Truncated { z_max: f64 },
}

/// Axial expansion class of a field in truncated mode: sine series
/// (vanishing at `±z_max`) or cosine series (zero slope there). Periodic
/// grids use one full Fourier basis for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZClass {
    Dirichlet,
    Neumann,
}

impl ZClass {
    pub fn other(self) -> Self {
        match self {
            Self::Dirichlet => Self::Neumann,
            Self::Neumann => Self::Dirichlet,
        }
    }
}

/// Dense axial transform pair for one expansion class.
#[derive(Debug, Clone)]
pub struct ZTransform {
    /// values → coefficients
    pub forward: DMatrix<f64>,
    /// coefficients → values
    pub inverse: DMatrix<f64>,
    /// wavenumber of each coefficient slot
    pub kappa: Vec<f64>,
    /// slot ↦ (slot in the derivative's class, factor); `None` if dropped
    pub deriv: Vec<Option<(usize, f64)>>,
    /// physical-space first derivative into the other class
    pub dz: DMatrix<f64>,
    /// physical-space second derivative within the class (true `−κ²`)
    pub dzz: DMatrix<f64>,
}

/// Serializable grid descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDescriptor {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub topology: ZTopology,
}

/// Staggered axisymmetric grid. Scalars live at radial cell centres
/// `r_c[i] = (i+½)h`; `u_r` and `φ` live at interior faces `r_f[i] = (i+1)h`.
/// The axis face and the outer face carry zero.
#[derive(Debug, Clone)]
pub struct GridRZ {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub topology: ZTopology,
    pub dr: f64,
    pub dz: f64,
    pub r_c: Vec<f64>,
    pub r_f: Vec<f64>,
    pub z: Vec<f64>,
    dirichlet: ZTransform,
    neumann: ZTransform,
    /// `(1/r)∂_r(r ∂_r ·)` at centres, no flux through the axis or `r_max`.
    pub lap_pressure: Tridiagonal,
    /// radial part of `(Δu)_r = ∂_r((1/r)∂_r(r u_r))` at faces
    pub lap_face_vector: Tridiagonal,
    /// radial part of `E²φ = r∂_r((1/r)∂_r φ)` at faces
    pub lap_face_flux: Tridiagonal,
    /// radial part of `Δf − f/r²` at centres (swirl components)
    pub lap_centre_swirl: Tridiagonal,
    /// radial part of `Δf` at centres (axial component)
    pub lap_centre_axial: Tridiagonal,
    /// `r∂_r` at faces
    pub rdr_face: Tridiagonal,
    /// `r∂_r` at centres, odd at the axis
    pub rdr_centre_odd: Tridiagonal,
    /// `r∂_r` at centres, even at the axis
    pub rdr_centre_even: Tridiagonal,
    pub(crate) projector: OnceLock<super::projection::Projector>,
}

fn periodic_transform(n: usize, period: f64, z: &[f64]) -> Result<ZTransform> {
    // slots: c0, (c1, s1), …, (c_{n/2−1}, s_{n/2−1}), c_{n/2}
    let mut inverse = DMatrix::zeros(n, n);
    let mut kappa = vec![0.0; n];
    let mut deriv = vec![None; n];
    let base = 2.0 * PI / period;
    for (j, &zj) in z.iter().enumerate() {
        inverse[(j, 0)] = 1.0;
        for m in 1..n / 2 {
            let k = base * m as f64;
            inverse[(j, 2 * m - 1)] = (k * zj).cos();
            inverse[(j, 2 * m)] = (k * zj).sin();
        }
        inverse[(j, n - 1)] = (base * (n / 2) as f64 * zj).cos();
    }
    for m in 1..n / 2 {
        let k = base * m as f64;
        kappa[2 * m - 1] = k;
        kappa[2 * m] = k;
        deriv[2 * m - 1] = Some((2 * m, -k));
        deriv[2 * m] = Some((2 * m - 1, k));
    }
    kappa[n - 1] = base * (n / 2) as f64;
    let forward = inverse
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidGrid("singular periodic transform".into()))?;
    let mut t = ZTransform {
        forward,
        inverse,
        kappa,
        deriv,
        dz: DMatrix::zeros(0, 0),
        dzz: DMatrix::zeros(0, 0),
    };
    let (dz, dzz) = derivative_matrices(&t, &t);
    t.dz = dz;
    t.dzz = dzz;
    Ok(t)
}

fn truncated_transforms(n: usize, z_max: f64, z: &[f64]) -> Result<(ZTransform, ZTransform)> {
    let k = |m: usize| m as f64 * PI / (2.0 * z_max);
    let mut sin_inv = DMatrix::zeros(n, n);
    let mut cos_inv = DMatrix::zeros(n, n);
    for (j, &zj) in z.iter().enumerate() {
        for s in 0..n {
            sin_inv[(j, s)] = (k(s + 1) * (zj + z_max)).sin();
            cos_inv[(j, s)] = (k(s) * (zj + z_max)).cos();
        }
    }
    let sin_fwd = sin_inv
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidGrid("singular sine transform".into()))?;
    let cos_fwd = cos_inv
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidGrid("singular cosine transform".into()))?;
    // sin_m → k_m cos_m ; cos_m → −k_m sin_m
    let sin_deriv = (0..n)
        .map(|s| (s + 1 <= n - 1).then(|| (s + 1, k(s + 1))))
        .collect();
    let cos_deriv = (0..n)
        .map(|s| (s >= 1).then(|| (s - 1, -k(s))))
        .collect();
    let mut d = ZTransform {
        forward: sin_fwd,
        inverse: sin_inv,
        kappa: (0..n).map(|s| k(s + 1)).collect(),
        deriv: sin_deriv,
        dz: DMatrix::zeros(0, 0),
        dzz: DMatrix::zeros(0, 0),
    };
    let mut nn = ZTransform {
        forward: cos_fwd,
        inverse: cos_inv,
        kappa: (0..n).map(k).collect(),
        deriv: cos_deriv,
        dz: DMatrix::zeros(0, 0),
        dzz: DMatrix::zeros(0, 0),
    };
    let (d_dz, d_dzz) = derivative_matrices(&d, &nn);
    let (n_dz, n_dzz) = derivative_matrices(&nn, &d);
    d.dz = d_dz;
    d.dzz = d_dzz;
    nn.dz = n_dz;
    nn.dzz = n_dzz;
    Ok((d, nn))
}

/// Physical-space first derivative (`from` class into `to` class) and second
/// derivative within `from`.
fn derivative_matrices(from: &ZTransform, to: &ZTransform) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = from.kappa.len();
    let mut d = DMatrix::zeros(n, n);
    for (s, map) in from.deriv.iter().enumerate() {
        if let Some((t, f)) = *map {
            d[(t, s)] = f;
        }
    }
    let dz = &to.inverse * d * &from.forward;
    let k2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        from.kappa.iter().map(|k| -k * k),
    ));
    let dzz = &from.inverse * k2 * &from.forward;
    (dz, dzz)
}

impl GridRZ {
    pub fn new(n_r: usize, n_z: usize, r_max: f64, topology: ZTopology) -> Result<Arc<Self>> {
        if n_r < 5 {
            return Err(Error::InvalidGrid(format!("n_r must be >= 5 (got {n_r})")));
        }
        if n_z < 2 || n_z % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_z must be even and >= 2 (got {n_z})"
            )));
        }
        if !(r_max > 0.0) {
            return Err(Error::InvalidGrid(format!("r_max must be > 0 (got {r_max})")));
        }
        let h = r_max / n_r as f64;
        let r_c: Vec<f64> = (0..n_r).map(|i| (i as f64 + 0.5) * h).collect();
        let r_f: Vec<f64> = (1..n_r).map(|i| i as f64 * h).collect();
        let (z, dz, dirichlet, neumann) = match topology {
            ZTopology::Periodic { period } => {
                if !(period > 0.0) {
                    return Err(Error::InvalidGrid("period must be > 0".into()));
                }
                let dz = period / n_z as f64;
                let z: Vec<f64> = (0..n_z).map(|j| j as f64 * dz).collect();
                let t = periodic_transform(n_z, period, &z)?;
                (z, dz, t.clone(), t)
            }
            ZTopology::Truncated { z_max } => {
                if !(z_max > 0.0) {
                    return Err(Error::InvalidGrid("z_max must be > 0".into()));
                }
                let dz = 2.0 * z_max / n_z as f64;
                let z: Vec<f64> = (0..n_z).map(|j| -z_max + (j as f64 + 0.5) * dz).collect();
                let (d, nn) = truncated_transforms(n_z, z_max, &z)?;
                (z, dz, d, nn)
            }
        };
        let h2 = h * h;
        let nf = n_r - 1;

        let mut lap_pressure = Tridiagonal::zeros(n_r);
        let mut lap_centre_swirl = Tridiagonal::zeros(n_r);
        let mut lap_centre_axial = Tridiagonal::zeros(n_r);
        for i in 0..n_r {
            let rc = r_c[i];
            let r_lo = i as f64 * h;
            let r_hi = (i + 1) as f64 * h;
            let lo = r_lo / (rc * h2);
            let hi = r_hi / (rc * h2);
            // interior fluxes
            if i > 0 {
                for t in [&mut lap_pressure, &mut lap_centre_axial] {
                    t.lower[i - 1] = lo;
                    t.diag[i] -= lo;
                }
            }
            if i + 1 < n_r {
                for t in [&mut lap_pressure, &mut lap_centre_axial] {
                    t.upper[i] = hi;
                    t.diag[i] -= hi;
                }
            } else {
                // zero value at r_max through the ghost −f
                lap_centre_axial.diag[i] -= 2.0 * hi;
            }
        }
        // swirl rows in the form ∂_r((1/r)∂_r(r f)); exact on f = ar + br³
        for i in 0..n_r {
            let (rc, r_hi) = (r_c[i], (i + 1) as f64 * h);
            let t = &mut lap_centre_swirl;
            if i + 1 < n_r {
                t.upper[i] = r_c[i + 1] / (r_hi * h2);
                t.diag[i] -= rc / (r_hi * h2);
            } else {
                t.diag[i] -= 2.0 / h2;
            }
            if i > 0 {
                let r_lo = i as f64 * h;
                t.lower[i - 1] = r_c[i - 1] / (r_lo * h2);
                t.diag[i] -= rc / (r_lo * h2);
            } else {
                // axis value of (1/r)∂_r(r f) fitted from the first two cells
                t.diag[0] -= 3.5 / h2;
                t.upper[0] -= 1.0 / (6.0 * h2);
            }
        }

        let mut lap_face_vector = Tridiagonal::zeros(nf);
        let mut lap_face_flux = Tridiagonal::zeros(nf);
        let mut rdr_face = Tridiagonal::zeros(nf);
        for f in 0..nf {
            // (Δu)_r = [D_r u]_{f+1} − [D_r u]_f over h with D_r u at centre i:
            // (r_f[i] u_i − r_f[i−1] u_{i−1}) / (r_c[i] h)
            let (c_lo, c_hi) = (r_c[f], r_c[f + 1]);
            let rf = r_f[f];
            lap_face_vector.diag[f] = -rf / (c_hi * h2) - rf / (c_lo * h2);
            if f + 1 < nf {
                lap_face_vector.upper[f] = r_f[f + 1] / (c_hi * h2);
            }
            if f > 0 {
                lap_face_vector.lower[f - 1] = r_f[f - 1] / (c_lo * h2);
            }
            // E²φ = r_f [ (φ_{f+1}−φ_f)/(h r_c[f+1]) − (φ_f−φ_{f−1})/(h r_c[f]) ] / h
            lap_face_flux.diag[f] = -rf / (c_hi * h2) - rf / (c_lo * h2);
            if f + 1 < nf {
                lap_face_flux.upper[f] = rf / (c_hi * h2);
            }
            if f > 0 {
                lap_face_flux.lower[f - 1] = rf / (c_lo * h2);
            }
            if f + 1 < nf {
                rdr_face.upper[f] = rf / (2.0 * h);
            }
            if f > 0 {
                rdr_face.lower[f - 1] = -rf / (2.0 * h);
            }
        }

        let mut rdr_centre_odd = Tridiagonal::zeros(n_r);
        let mut rdr_centre_even = Tridiagonal::zeros(n_r);
        for i in 0..n_r {
            let c = r_c[i] / (2.0 * h);
            for (t, axis_sign) in [(&mut rdr_centre_odd, -1.0), (&mut rdr_centre_even, 1.0)] {
                if i + 1 < n_r {
                    t.upper[i] = c;
                } else {
                    // ghost −f beyond r_max
                    t.diag[i] -= c;
                }
                if i > 0 {
                    t.lower[i - 1] = -c;
                } else {
                    t.diag[i] -= c * axis_sign;
                }
            }
        }

        Ok(Arc::new(Self {
            n_r,
            n_z,
            r_max,
            topology,
            dr: h,
            dz,
            r_c,
            r_f,
            z,
            dirichlet,
            neumann,
            lap_pressure,
            lap_face_vector,
            lap_face_flux,
            lap_centre_swirl,
            lap_centre_axial,
            rdr_face,
            rdr_centre_odd,
            rdr_centre_even,
            projector: OnceLock::new(),
        }))
    }

    pub fn from_descriptor(d: &GridDescriptor) -> Result<Arc<Self>> {
        Self::new(d.n_r, d.n_z, d.r_max, d.topology)
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            n_r: self.n_r,
            n_z: self.n_z,
            r_max: self.r_max,
            topology: self.topology,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.topology, ZTopology::Periodic { .. })
    }

    pub fn n_faces(&self) -> usize {
        self.n_r - 1
    }

    pub fn basis(&self, class: ZClass) -> &ZTransform {
        match class {
            ZClass::Dirichlet => &self.dirichlet,
            ZClass::Neumann => &self.neumann,
        }
    }

    /// Axial quadrature weight per node.
    pub fn z_weight(&self) -> f64 {
        self.dz
    }

    pub fn zeros_centre(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.n_z, self.n_r)
    }

    pub fn zeros_face(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.n_z, self.n_r - 1)
    }

    /// Fills a centre array from `f(r, z)`.
    pub fn sample_centre(&self, f: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_z, self.n_r, |j, i| f(self.r_c[i], self.z[j]))
    }

    pub fn sample_face(&self, f: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_z, self.n_r - 1, |j, i| f(self.r_f[i], self.z[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_derivative_is_spectral() {
        let g = GridRZ::new(8, 16, 1.0, ZTopology::Periodic { period: 2.0 * PI }).unwrap();
        let b = g.basis(ZClass::Dirichlet);
        let f = DMatrix::from_fn(16, 1, |j, _| (3.0 * g.z[j]).sin() + (2.0 * g.z[j]).cos());
        let d = &b.dz * &f;
        let dd = &b.dzz * &f;
        for j in 0..16 {
            let z = g.z[j];
            assert!((d[j] - (3.0 * (3.0 * z).cos() - 2.0 * (2.0 * z).sin())).abs() < 1e-12);
            assert!((dd[j] + 9.0 * (3.0 * z).sin() + 4.0 * (2.0 * z).cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn truncated_classes_map_into_each_other() {
        let zm = 3.0;
        let g = GridRZ::new(8, 24, 1.0, ZTopology::Truncated { z_max: zm }).unwrap();
        let k = 5.0 * PI / (2.0 * zm);
        let f = DMatrix::from_fn(24, 1, |j, _| (k * (g.z[j] + zm)).sin());
        let d = &g.basis(ZClass::Dirichlet).dz * &f;
        let back = &g.basis(ZClass::Neumann).dz * &d;
        for j in 0..24 {
            let s = k * (g.z[j] + zm);
            assert!((d[j] - k * s.cos()).abs() < 1e-11);
            assert!((back[j] + k * k * s.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_odd_axial_count() {
        assert!(GridRZ::new(8, 15, 1.0, ZTopology::Periodic { period: 1.0 }).is_err());
    }
}
