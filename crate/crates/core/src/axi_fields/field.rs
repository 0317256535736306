use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::{GridRZ, ZClass};
use super::norms::NormTable;

/// Physical variables `(x, t)` or similarity variables `(ξ, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Physical,
    Similarity,
}

impl Frame {
    pub fn name(self) -> &'static str {
        match self {
            Self::Physical => "physical",
            Self::Similarity => "similarity",
        }
    }
}

/// Axial classes of the stored components (truncated grids only).
pub const U_R_CLASS: ZClass = ZClass::Dirichlet;
pub const U_THETA_CLASS: ZClass = ZClass::Dirichlet;
pub const U_Z_CLASS: ZClass = ZClass::Neumann;
pub const PHI_CLASS: ZClass = ZClass::Dirichlet;
pub const B_THETA_CLASS: ZClass = ZClass::Neumann;
pub const PRESSURE_CLASS: ZClass = ZClass::Dirichlet;

/// Axisymmetric velocity/magnetic state. Arrays are `n_z × n_r` at cell
/// centres, or `n_z × (n_r − 1)` at interior faces for `u_r` and `φ`.
/// The poloidal field is carried by the flux function:
/// `B_r = ∂_zφ/r`, `B_z = −∂_rφ/r`.
#[derive(Debug, Clone)]
pub struct AxiField {
    pub grid: Arc<GridRZ>,
    pub frame: Frame,
    pub u_r: DMatrix<f64>,
    pub u_theta: DMatrix<f64>,
    pub u_z: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub b_theta: DMatrix<f64>,
    /// diagnostic only
    pub pressure: DMatrix<f64>,
}

impl AxiField {
    pub fn zeros(grid: &Arc<GridRZ>, frame: Frame) -> Self {
        Self {
            grid: grid.clone(),
            frame,
            u_r: grid.zeros_face(),
            u_theta: grid.zeros_centre(),
            u_z: grid.zeros_centre(),
            phi: grid.zeros_face(),
            b_theta: grid.zeros_centre(),
            pressure: grid.zeros_centre(),
        }
    }

    /// Evolved components in a fixed order.
    pub fn components(&self) -> [&DMatrix<f64>; 5] {
        [&self.u_r, &self.u_theta, &self.u_z, &self.phi, &self.b_theta]
    }

    pub fn components_mut(&mut self) -> [&mut DMatrix<f64>; 5] {
        [
            &mut self.u_r,
            &mut self.u_theta,
            &mut self.u_z,
            &mut self.phi,
            &mut self.b_theta,
        ]
    }

    pub fn scale(&mut self, c: f64) {
        for m in self.components_mut() {
            *m *= c;
        }
        self.pressure *= c;
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a·other`
    pub fn axpy(&mut self, a: f64, other: &AxiField) {
        let src = other.components();
        for (dst, s) in self.components_mut().into_iter().zip(src) {
            dst.zip_apply(s, |d, v| *d += a * v);
        }
        self.pressure.zip_apply(&other.pressure, |d, v| *d += a * v);
    }

    /// Linear combination `Σ cᵢ Xᵢ`.
    pub fn combination(terms: &[(f64, &AxiField)]) -> AxiField {
        let mut out = AxiField::zeros(&terms[0].1.grid, terms[0].1.frame);
        for (c, x) in terms {
            out.axpy(*c, x);
        }
        out
    }

    /// Cylindrical inner product over the evolved components
    /// (`r`-weighted midpoint sums; not a physical energy).
    pub fn dot(&self, other: &AxiField) -> f64 {
        let g = &self.grid;
        let wz = g.z_weight() * g.dr * 2.0 * std::f64::consts::PI;
        let mut s = 0.0;
        for (k, (a, b)) in self.components().into_iter().zip(other.components()).enumerate() {
            let radii = if k == 0 || k == 3 { &g.r_f } else { &g.r_c };
            for (i, &r) in radii.iter().enumerate() {
                s += r * a.column(i).dot(&b.column(i));
            }
        }
        s * wz
    }

    pub fn max_abs(&self) -> f64 {
        self.components()
            .iter()
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Velocity components collocated at cell centres.
    pub fn velocity(&self) -> VectorField {
        let g = &self.grid;
        VectorField {
            grid: g.clone(),
            r: g.face_to_centre(&self.u_r),
            theta: self.u_theta.clone(),
            z: self.u_z.clone(),
            class: VectorField::VELOCITY_CLASSES,
        }
    }

    /// Magnetic components collocated at cell centres.
    pub fn magnetic(&self) -> VectorField {
        let g = &self.grid;
        let (b_r_face, b_z) = g.field_from_flux(&self.phi);
        VectorField {
            grid: g.clone(),
            r: g.face_to_centre(&b_r_face),
            theta: self.b_theta.clone(),
            z: b_z,
            class: VectorField::MAGNETIC_CLASSES,
        }
    }
}

/// Three cylindrical components collocated at cell centres.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Arc<GridRZ>,
    pub r: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub class: [ZClass; 3],
}

impl VectorField {
    pub const VELOCITY_CLASSES: [ZClass; 3] = [ZClass::Dirichlet, ZClass::Dirichlet, ZClass::Neumann];
    pub const MAGNETIC_CLASSES: [ZClass; 3] = [ZClass::Neumann, ZClass::Neumann, ZClass::Dirichlet];

    pub fn zeros(grid: &Arc<GridRZ>, class: [ZClass; 3]) -> Self {
        Self {
            grid: grid.clone(),
            r: grid.zeros_centre(),
            theta: grid.zeros_centre(),
            z: grid.zeros_centre(),
            class,
        }
    }

    pub fn from_fn(
        grid: &Arc<GridRZ>,
        class: [ZClass; 3],
        f: impl Fn(f64, f64) -> [f64; 3],
    ) -> Self {
        let mut out = Self::zeros(grid, class);
        for j in 0..grid.n_z {
            for i in 0..grid.n_r {
                let v = f(grid.r_c[i], grid.z[j]);
                out.r[(j, i)] = v[0];
                out.theta[(j, i)] = v[1];
                out.z[(j, i)] = v[2];
            }
        }
        out
    }

    pub fn comps(&self) -> [&DMatrix<f64>; 3] {
        [&self.r, &self.theta, &self.z]
    }

    pub fn comps_mut(&mut self) -> [&mut DMatrix<f64>; 3] {
        [&mut self.r, &mut self.theta, &mut self.z]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for m in out.comps_mut() {
            *m *= c;
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        let src = other.comps();
        for (d, s) in self.comps_mut().into_iter().zip(src) {
            d.zip_apply(s, |x, v| *x += a * v);
        }
    }

    /// Componentwise radial and axial derivatives at cell centres.
    pub fn derivatives(&self) -> Derivatives {
        let g = &self.grid;
        let odd = [true, true, false];
        let mut dr: [DMatrix<f64>; 3] = Default::default();
        let mut dz: [DMatrix<f64>; 3] = Default::default();
        for (c, f) in self.comps().into_iter().enumerate() {
            dr[c] = g.dr_centre(f, odd[c]);
            dz[c] = g.dz_of(f, self.class[c]);
        }
        Derivatives { dr, dz }
    }
}

/// Radial and axial derivatives of the three components of a `VectorField`.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub dr: [DMatrix<f64>; 3],
    pub dz: [DMatrix<f64>; 3],
}

/// `Ξ = (V, W)` with a lazily filled norm cache.
#[derive(Debug, Clone)]
pub struct PairState {
    fields: AxiField,
    cache: Option<NormTable>,
}

impl PairState {
    pub fn new(fields: AxiField) -> Self {
        Self {
            fields,
            cache: None,
        }
    }

    pub fn fields(&self) -> &AxiField {
        &self.fields
    }

    /// Mutable access drops cached norms.
    pub fn fields_mut(&mut self) -> &mut AxiField {
        self.cache = None;
        &mut self.fields
    }

    pub fn into_fields(self) -> AxiField {
        self.fields
    }

    pub fn velocity(&self) -> VectorField {
        self.fields.velocity()
    }

    pub fn magnetic(&self) -> VectorField {
        self.fields.magnetic()
    }

    /// Seminorms up to `order`, cached until the next mutation.
    pub fn norms(&mut self, order: usize) -> &NormTable {
        let stale = self.cache.as_ref().is_none_or(|t| t.order < order);
        if stale {
            self.cache = Some(super::norms::norms(&self.fields, order));
        }
        self.cache.as_ref().expect("filled")
    }
}
