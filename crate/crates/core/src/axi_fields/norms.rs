use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::field::{AxiField, VectorField};
use super::grid::{GridRZ, ZClass};
use crate::stencil::fornberg_weights;

/// Highest supported Sobolev order.
pub const MAX_ORDER: usize = 4;

/// Weighted seminorms `|·|_{H^j}` for `j = 0..=order` (index 0 is L²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub order: usize,
    pub velocity: Vec<f64>,
    pub magnetic: Vec<f64>,
}

impl NormTable {
    /// `(Σ_j |Ξ|²_{H^j})^{1/2}` over both parts.
    pub fn h_norm(&self, n: usize) -> f64 {
        (0..=n.min(self.order))
            .map(|j| self.velocity[j].powi(2) + self.magnetic[j].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2(&self) -> f64 {
        self.h_norm(0)
    }
}

/// Value and even derivatives at `r = 0` of an even function sampled at the
/// first four nodes, from a cubic in `r²`.
fn axis_weights(nodes: &[f64]) -> [[f64; 4]; 3] {
    let x: Vec<f64> = nodes[..4].iter().map(|r| r * r).collect();
    let w = fornberg_weights(0.0, &x, 2);
    // q(r) = a + b r² + c r⁴ + … ⇒ q''(0) = 2b, q⁗(0) = 24c
    let scale = [1.0, 2.0, 12.0];
    let mut out = [[0.0; 4]; 3];
    for k in 0..3 {
        for i in 0..4 {
            out[k][i] = scale[k] * w[k][i];
        }
    }
    out
}

/// Axis derivatives `(q(0), q''(0), q⁗(0))` of one row.
fn axis_values(w: &[[f64; 4]; 3], row: &[f64]) -> [f64; 3] {
    let dot = |k: usize| (0..4).map(|i| w[k][i] * row[i]).sum::<f64>();
    [dot(0), dot(1), dot(2)]
}

impl GridRZ {
    /// `∫ q r dr` per axial row for an even-in-r integrand at centres: midpoint
    /// rule with axis end corrections through fourth order.
    fn radial_integral_centre(&self, q: &DMatrix<f64>) -> Vec<f64> {
        let h = self.dr;
        let w = axis_weights(&self.r_c);
        (0..q.nrows())
            .map(|j| {
                let row: Vec<f64> = q.row(j).iter().copied().collect();
                let mid: f64 = self.r_c.iter().zip(&row).map(|(r, v)| r * v).sum::<f64>() * h;
                let [q0, q2, q4] = axis_values(&w, &row);
                mid - h * h / 24.0 * q0 + 7.0 * h.powi(4) / 1920.0 * q2 - 31.0 * h.powi(6) / 193536.0 * q4
            })
            .collect()
    }

    /// Same for face samples (trapezoid with zero end values).
    fn radial_integral_face(&self, q: &DMatrix<f64>) -> Vec<f64> {
        let h = self.dr;
        let w = axis_weights(&self.r_f);
        (0..q.nrows())
            .map(|j| {
                let row: Vec<f64> = q.row(j).iter().copied().collect();
                let trap: f64 = self.r_f.iter().zip(&row).map(|(r, v)| r * v).sum::<f64>() * h;
                let [q0, q2, q4] = axis_values(&w, &row);
                trap + h * h / 12.0 * q0 - h.powi(4) / 240.0 * q2 + h.powi(6) / 6048.0 * q4
            })
            .collect()
    }

    /// `∫∫ q 2πr dr dz` for an integrand even in `r`, sampled at centres.
    pub fn integrate_centre(&self, q: &DMatrix<f64>) -> f64 {
        2.0 * PI * self.z_weight() * self.radial_integral_centre(q).iter().sum::<f64>()
    }

    /// `∫∫ q 2πr dr dz` for an integrand sampled at interior faces.
    pub fn integrate_face(&self, q: &DMatrix<f64>) -> f64 {
        2.0 * PI * self.z_weight() * self.radial_integral_face(q).iter().sum::<f64>()
    }

    /// `∂_r^a ∂_z^b f` at centres, tracking axis parity and axial class.
    pub fn mixed_derivative(
        &self,
        f: &DMatrix<f64>,
        mut odd: bool,
        mut class: ZClass,
        a: usize,
        b: usize,
    ) -> DMatrix<f64> {
        let mut out = f.clone();
        for _ in 0..b {
            out = self.dz_of(&out, class);
            class = class.other();
        }
        for _ in 0..a {
            out = self.dr_centre(&out, odd);
            odd = !odd;
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `|F|²_{H^j} = Σ_{a+b=j} C(j,a) ‖∂_r^a ∂_z^b F‖²`, componentwise.
pub fn seminorm_squared(v: &VectorField, j: usize) -> f64 {
    let g = &v.grid;
    let odd = [true, true, false];
    let mut total = 0.0;
    for (c, f) in v.comps().into_iter().enumerate() {
        for a in 0..=j {
            let d = g.mixed_derivative(f, odd[c], v.class[c], a, j - a);
            total += binomial(j, a) * g.integrate_centre(&d.component_mul(&d));
        }
    }
    total
}

/// L² norm of a collocated vector field.
pub fn l2_vector(v: &VectorField) -> f64 {
    seminorm_squared(v, 0).max(0.0).sqrt()
}

/// Velocity L² with `u_r` integrated at its native faces.
pub fn l2_velocity(x: &AxiField) -> f64 {
    let g = &x.grid;
    let s = g.integrate_face(&x.u_r.component_mul(&x.u_r))
        + g.integrate_centre(&x.u_theta.component_mul(&x.u_theta))
        + g.integrate_centre(&x.u_z.component_mul(&x.u_z));
    s.max(0.0).sqrt()
}

/// Magnetic L² with `B_r = ∂_zφ/r` at faces.
pub fn l2_magnetic(x: &AxiField) -> f64 {
    let g = &x.grid;
    let (b_r, b_z) = g.field_from_flux(&x.phi);
    let s = g.integrate_face(&b_r.component_mul(&b_r))
        + g.integrate_centre(&x.b_theta.component_mul(&x.b_theta))
        + g.integrate_centre(&b_z.component_mul(&b_z));
    s.max(0.0).sqrt()
}

/// Seminorm table up to `order ≤ MAX_ORDER`.
pub fn norms(x: &AxiField, order: usize) -> NormTable {
    let order = order.min(MAX_ORDER);
    let v = x.velocity();
    let w = x.magnetic();
    let mut velocity = vec![l2_velocity(x)];
    let mut magnetic = vec![l2_magnetic(x)];
    for j in 1..=order {
        velocity.push(seminorm_squared(&v, j).max(0.0).sqrt());
        magnetic.push(seminorm_squared(&w, j).max(0.0).sqrt());
    }
    NormTable {
        order,
        velocity,
        magnetic,
    }
}
