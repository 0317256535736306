use std::sync::Arc;

use nalgebra::DMatrix;

use super::field::{AxiField, Derivatives, Frame, VectorField};
use super::grid::GridRZ;
use crate::profiles::ProfileEvaluator;

/// Cylindrical `(a·∇)b` at cell centres, given the derivatives of `b`.
pub fn advect(a: &VectorField, b: &VectorField, db: &Derivatives) -> [DMatrix<f64>; 3] {
    let g = &a.grid;
    let inv_r = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (i, &r) in g.r_c.iter().enumerate() {
            out.column_mut(i).scale_mut(1.0 / r);
        }
        out
    };
    let at_over_r = inv_r(&a.theta);
    let mut r = a.r.component_mul(&db.dr[0]) + a.z.component_mul(&db.dz[0]);
    r -= at_over_r.component_mul(&b.theta);
    let mut t = a.r.component_mul(&db.dr[1]) + a.z.component_mul(&db.dz[1]);
    t += at_over_r.component_mul(&b.r);
    let z = a.r.component_mul(&db.dr[2]) + a.z.component_mul(&db.dz[2]);
    [r, t, z]
}

/// `b(u, v, w) = ∫ (u·∇)v · w  2πr dr dz`.
pub fn trilinear_b(u: &VectorField, v: &VectorField, w: &VectorField) -> f64 {
    let g = &u.grid;
    let a = advect(u, v, &v.derivatives());
    let q = a[0].component_mul(&w.r) + a[1].component_mul(&w.theta) + a[2].component_mul(&w.z);
    g.integrate_centre(&q)
}

/// Velocity and magnetic parts of a pair `Φ = (u, 𝕌)`.
#[derive(Debug, Clone)]
pub struct Pair {
    pub v: VectorField,
    pub w: VectorField,
}

impl Pair {
    pub fn from_field(x: &AxiField) -> Self {
        Self {
            v: x.velocity(),
            w: x.magnetic(),
        }
    }
}

/// `𝔅(Φ¹, Φ²) = (u¹·∇u² − 𝕌¹·∇𝕌², u¹·∇𝕌² − 𝕌¹·∇u²)`, unprojected.
pub fn bilinear_b(p1: &Pair, p2: &Pair) -> Pair {
    let dv2 = p2.v.derivatives();
    let dw2 = p2.w.derivatives();
    let [a0, a1, a2] = advect(&p1.v, &p2.v, &dv2);
    let [b0, b1, b2] = advect(&p1.w, &p2.w, &dw2);
    let [c0, c1, c2] = advect(&p1.v, &p2.w, &dw2);
    let [d0, d1, d2] = advect(&p1.w, &p2.v, &dv2);
    let g = p1.v.grid.clone();
    Pair {
        v: VectorField {
            grid: g.clone(),
            r: a0 - b0,
            theta: a1 - b1,
            z: a2 - b2,
            class: p2.v.class,
        },
        w: VectorField {
            grid: g,
            r: c0 - d0,
            theta: c1 - d1,
            z: c2 - d2,
            class: p2.w.class,
        },
    }
}

/// `𝔅₀(Φ¹,Φ²,Φ³) = b(u¹,u²,u³) − b(𝕌¹,𝕌²,u³) + b(u¹,𝕌²,𝕌³) − b(𝕌¹,u²,𝕌³)`.
pub fn trilinear_pair(p1: &Pair, p2: &Pair, p3: &Pair) -> f64 {
    trilinear_b(&p1.v, &p2.v, &p3.v) - trilinear_b(&p1.w, &p2.w, &p3.v) + trilinear_b(&p1.v, &p2.w, &p3.w)
        - trilinear_b(&p1.w, &p2.v, &p3.w)
}

/// `⟨Φ, Ψ⟩` over both parts.
pub fn pair_inner(a: &Pair, b: &Pair) -> f64 {
    let g = &a.v.grid;
    let mut q = DMatrix::zeros(g.n_z, g.n_r);
    for (x, y) in a.v.comps().into_iter().zip(b.v.comps()).chain(a.w.comps().into_iter().zip(b.w.comps())) {
        q += x.component_mul(y);
    }
    g.integrate_centre(&q)
}

/// Everything the symmetric coupling needs from one argument.
#[derive(Debug, Clone)]
pub struct Operand {
    pub v: VectorField,
    pub w: VectorField,
    pub dv: Derivatives,
    pub dw: Derivatives,
    /// velocity `(u_r, u_z)` at interior faces
    pub ur_face: DMatrix<f64>,
    pub uz_face: DMatrix<f64>,
    /// `∇φ` at interior faces
    pub dphi_r: DMatrix<f64>,
    pub dphi_z: DMatrix<f64>,
}

impl GridRZ {
    /// `∂_r` at centres of a face field with zero axis and outer values.
    fn dr_face_to_centre(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_r;
        let h = self.dr;
        let mut out = DMatrix::zeros(f.nrows(), n);
        for i in 0..n {
            let mut col = out.column_mut(i);
            if i + 1 < n {
                col.axpy(1.0 / h, &f.column(i), 1.0);
            }
            if i > 0 {
                col.axpy(-1.0 / h, &f.column(i - 1), 1.0);
            }
        }
        out
    }
}

impl Operand {
    pub fn from_state(x: &AxiField) -> Self {
        let g = &x.grid;
        let v = x.velocity();
        let w = x.magnetic();
        let mut dv = v.derivatives();
        let mut dw = w.derivatives();
        // compact radial derivative of face-native radial components
        dv.dr[0] = g.dr_face_to_centre(&x.u_r);
        let (b_r, _) = g.field_from_flux(&x.phi);
        dw.dr[0] = g.dr_face_to_centre(&b_r);
        Self {
            ur_face: x.u_r.clone(),
            uz_face: g.centre_to_face(&x.u_z),
            dphi_r: g.dr_face(&x.phi),
            dphi_z: g.dz_of(&x.phi, super::field::PHI_CLASS),
            v,
            w,
            dv,
            dw,
        }
    }

    /// `scale·(V₀, W₀)` with `V₀ = v(r) e_θ`, `W₀ = ε b(r) e_z`, evaluated
    /// analytically (z-independent).
    pub fn background(grid: &Arc<GridRZ>, profile: &ProfileEvaluator, epsilon: f64, scale: f64) -> Self {
        let mut v = VectorField::zeros(grid, VectorField::VELOCITY_CLASSES);
        let mut w = VectorField::zeros(grid, VectorField::MAGNETIC_CLASSES);
        let mut dv = v.derivatives();
        let mut dw = w.derivatives();
        for (i, &r) in grid.r_c.iter().enumerate() {
            let p = profile.at(r);
            v.theta.column_mut(i).fill(scale * p.swirl(r));
            dv.dr[1].column_mut(i).fill(scale * p.d_swirl(r));
            w.z.column_mut(i).fill(scale * epsilon * p.b);
            dw.dr[2].column_mut(i).fill(scale * epsilon * p.d_b);
        }
        let mut dphi_r = grid.zeros_face();
        for (i, &r) in grid.r_f.iter().enumerate() {
            let p = profile.at(r);
            dphi_r.column_mut(i).fill(-scale * epsilon * r * p.b);
        }
        Self {
            v,
            w,
            dv,
            dw,
            ur_face: grid.zeros_face(),
            uz_face: grid.zeros_face(),
            dphi_r,
            dphi_z: grid.zeros_face(),
        }
    }

    pub fn grid(&self) -> &Arc<GridRZ> {
        &self.v.grid
    }
}

/// `𝔅(X, Y) + 𝔅(Y, X)` in stored-component layout: radial velocity and flux
/// at faces, the rest at centres. The flux entry is `u^X·∇φ^Y + u^Y·∇φ^X`.
pub fn sym_coupling(x: &Operand, y: &Operand, frame: Frame) -> AxiField {
    let g = x.grid();
    let vv_xy = advect(&x.v, &y.v, &y.dv);
    let vv_yx = advect(&y.v, &x.v, &x.dv);
    let ww_xy = advect(&x.w, &y.w, &y.dw);
    let ww_yx = advect(&y.w, &x.w, &x.dw);
    let vw_xy = advect(&x.v, &y.w, &y.dw);
    let wv_xy = advect(&x.w, &y.v, &y.dv);
    let vw_yx = advect(&y.v, &x.w, &x.dw);
    let wv_yx = advect(&y.w, &x.v, &x.dv);

    let vel = |c: usize| &vv_xy[c] + &vv_yx[c] - &ww_xy[c] - &ww_yx[c];
    let mut out = AxiField::zeros(g, frame);
    out.u_r = g.centre_to_face(&vel(0));
    out.u_theta = vel(1);
    out.u_z = vel(2);
    out.b_theta = &vw_xy[1] - &wv_xy[1] + &vw_yx[1] - &wv_yx[1];
    out.phi = x.ur_face.component_mul(&y.dphi_r)
        + x.uz_face.component_mul(&y.dphi_z)
        + y.ur_face.component_mul(&x.dphi_r)
        + y.uz_face.component_mul(&x.dphi_z);
    out
}
