use std::f64::consts::PI;

use nalgebra::SVector;
use num_dual::{hessian, Dual, Dual2SVec64, DualNum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axi_fields::{l2_magnetic, l2_velocity, VectorField};
use crate::error::{Error, Result};

use super::force::BackgroundForce;
use super::physical::{box_extent, radial_quadrature, SolutionPair};
use super::trajectory::Trajectory;

/// Axisymmetric solenoidal test function
/// `φ = (−r∂_zq, (r/σ)g, 2q + r∂_rq)` with `q = P·B(x)B(y)B(s)`, `g = Q·B(x)B(y)B(s)`,
/// `B(x) = (1 − x²)⁶` on `|x| < 1`, `x = (r−r₀)/σ`, `y = (z−z₀)/σ` and
/// `s = (log t − τ_c)/τ_w`. Smoothness on the axis needs `r₀ = 0` or `r₀ ≥ σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub r0: f64,
    pub z0: f64,
    pub sigma: f64,
    pub tau_c: f64,
    pub tau_w: f64,
    /// `P = p₀ + p₁(r/σ)² + p₂(z−z₀)/σ`
    pub poloidal: [f64; 3],
    /// `Q`, same form
    pub toroidal: [f64; 3],
}

/// Value and derivatives of one component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub dr: f64,
    pub dz: f64,
    pub dt: f64,
    pub drr: f64,
    pub dzz: f64,
}

fn bump<D: DualNum<Primitive = f64>>(x: D) -> D {
    (D::from(1.0) - x.clone() * x).powi(6)
}

impl TestFunction {
    fn profile<D: DualNum<Primitive = f64>>(&self, r: D, z: D, t: D, c: &[f64; 3]) -> D {
        let x = (r.clone() - self.r0) / self.sigma;
        let y = (z - self.z0) / self.sigma;
        let s = (t.ln() - self.tau_c) / self.tau_w;
        if x.re().abs() >= 1.0 || y.re().abs() >= 1.0 || s.re().abs() >= 1.0 {
            return D::from(0.0);
        }
        let poly = r.clone() * r * (c[1] / (self.sigma * self.sigma)) + y.clone() * c[2] + c[0];
        poly * bump(x) * bump(y) * bump(s)
    }

    fn components<D: DualNum<Primitive = f64>>(&self, r: D, z: D, t: D) -> [D; 3] {
        let (zero, one) = (D::from(0.0), D::from(1.0));
        let q = self.profile(r.clone(), z.clone(), t.clone(), &self.poloidal);
        let q_r = self
            .profile(
                Dual::new(r.clone(), one.clone()),
                Dual::new(z.clone(), zero.clone()),
                Dual::new(t.clone(), zero.clone()),
                &self.poloidal,
            )
            .eps;
        let q_z = self
            .profile(
                Dual::new(r.clone(), zero.clone()),
                Dual::new(z.clone(), one),
                Dual::new(t.clone(), zero),
                &self.poloidal,
            )
            .eps;
        let g = self.profile(r.clone(), z, t, &self.toroidal);
        [-(r.clone() * q_z), r.clone() * g / self.sigma, q * 2.0 + r * q_r]
    }

    /// Values of `[φ_r, φ_θ, φ_z]` at physical `(r, z, t)`.
    pub fn value(&self, r: f64, z: f64, t: f64) -> [f64; 3] {
        self.components(r, z, t)
    }

    /// `[φ_r, φ_θ, φ_z]` with derivatives at physical `(r, z, t)`.
    pub fn jets(&self, r: f64, z: f64, t: f64) -> [Jet; 3] {
        if !self.in_support(r, z, t) {
            return [Jet::default(); 3];
        }
        let x = SVector::<f64, 3>::from([r, z, t]);
        let out = hessian(
            |x: SVector<Dual2SVec64<3>, 3>| self.components(x[0], x[1], x[2]),
            &x,
        );
        out.map(|(v, g, h)| Jet {
            v,
            dr: g[0],
            dz: g[1],
            dt: g[2],
            drr: h[(0, 0)],
            dzz: h[(1, 1)],
        })
    }

    pub fn in_support(&self, r: f64, z: f64, t: f64) -> bool {
        let s = (t.ln() - self.tau_c) / self.tau_w;
        (r - self.r0).abs() < self.sigma && (z - self.z0).abs() < self.sigma && s.abs() < 1.0
    }

    /// `φ_λ(x, t) = φ(λx, λ²t)`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        Self {
            r0: self.r0 / lambda,
            z0: self.z0 / lambda,
            sigma: self.sigma / lambda,
            tau_c: self.tau_c - 2.0 * lambda.ln(),
            ..*self
        }
    }
}

/// Deterministic bank of `4 × 3 × 2` test functions with time centres spread
/// over `[tau_hi − span + 1, tau_hi − 1]`; every support stays inside
/// `0.85·min(R, Z)` in similarity variables over its time window.
pub fn test_bank(r_max: f64, z_max: f64, tau_hi: f64, span: f64) -> Vec<TestFunction> {
    let w = 1.0;
    let l = r_max.min(z_max);
    // (ρ₀, ζ₀, σ) at the centre time, in units of L
    let shapes = [(0.0, 0.0, 0.45), (0.3, 0.1, 0.2), (0.0, 0.2, 0.3)];
    let polys = [([1.0, 0.5, -0.3], [0.7, -0.2, 0.4]), ([0.3, -0.6, 0.8], [-0.5, 0.3, 0.6])];
    let n_t = 4;
    let step = ((span - 2.0 * w) / (n_t - 1) as f64).max(0.0);
    let mut out = Vec::with_capacity(n_t * shapes.len() * polys.len());
    for k in 0..n_t {
        let tau_c = tau_hi - w - k as f64 * step;
        let sc = (0.5 * tau_c).exp();
        for &(r0, z0, sigma) in &shapes {
            for &(p, q) in &polys {
                out.push(TestFunction {
                    r0: r0 * l * sc,
                    z0: z0 * l * sc,
                    sigma: sigma * l * sc,
                    tau_c,
                    tau_w: w,
                    poloidal: p,
                    toroidal: q,
                });
            }
        }
    }
    out
}

/// `(a·∇)φ` in cylindrical components.
fn advect(a: [f64; 3], phi: &[Jet; 3], r: f64) -> [f64; 3] {
    [
        a[0] * phi[0].dr + a[2] * phi[0].dz - a[1] * phi[1].v / r,
        a[0] * phi[1].dr + a[2] * phi[1].dz + a[1] * phi[0].v / r,
        a[0] * phi[2].dr + a[2] * phi[2].dz,
    ]
}

fn vector_laplacian(phi: &[Jet; 3], r: f64) -> [f64; 3] {
    let s = |j: &Jet| j.drr + j.dr / r + j.dzz;
    [s(&phi[0]) - phi[0].v / (r * r), s(&phi[1]) - phi[1].v / (r * r), s(&phi[2])]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], c: f64) -> [f64; 3] {
    [a[0] * c, a[1] * c, a[2] * c]
}

/// Momentum and induction integrands in physical variables, force excluded.
fn integrand(v: [f64; 3], h: [f64; 3], phi: &[Jet; 3], r: f64) -> (f64, f64) {
    let dt = [phi[0].dt, phi[1].dt, phi[2].dt];
    let lap = vector_laplacian(phi, r);
    let (vv, hh) = (advect(v, phi, r), advect(h, phi, r));
    (
        dot(v, dt) + dot(v, vv) - dot(h, hh) + dot(v, lap),
        dot(h, dt) + dot(h, vv) - dot(v, hh) + dot(h, lap),
    )
}

/// `|φ|² + |∇φ|²`.
fn h1_density(phi: &[Jet; 3], r: f64) -> f64 {
    let grad: f64 = phi.iter().map(|j| j.dr * j.dr + j.dz * j.dz).sum();
    let val: f64 = phi.iter().map(|j| j.v * j.v).sum();
    val + grad + (phi[0].v.powi(2) + phi[1].v.powi(2)) / (r * r)
}

/// Composite Gauss–Legendre rule on `[lo, hi]`.
fn composite(lo: f64, hi: f64, panels: usize, nodes: usize) -> Vec<(f64, f64)> {
    let (x, w) = crate::stencil::gauss_legendre(nodes);
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let a = lo + p as f64 * h;
            x.iter().zip(&w).map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w)).collect::<Vec<_>>()
        })
        .collect()
}

/// Composite Gauss–Legendre on the support in `r`, `z` and `log t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            panels: 4,
            nodes: 8,
        }
    }
}

/// Pieces of a weak residual against one test function.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakTerms {
    /// field terms of the momentum equation
    pub momentum: f64,
    pub induction: f64,
    /// `∫∫ f·φ`
    pub force_momentum: f64,
    pub force_induction: f64,
    /// `‖φ‖_{L²_t H¹_x}`
    pub norm: f64,
}

impl WeakTerms {
    pub fn residual(&self) -> (f64, f64) {
        (self.momentum + self.force_momentum, self.induction + self.force_induction)
    }
}

/// Cubic interpolation of a collocated field at similarity `(ρ, ζ)`, with
/// mirror images across the axis.
fn interpolate(v: &VectorField, rho: f64, zeta: f64) -> [f64; 3] {
    let g = &v.grid;
    let (nr, nz) = (g.n_r as isize, g.n_z as isize);
    let i0 = ((rho / g.dr - 0.5).floor() as isize - 1).min(nr - 4);
    let j0 = (((zeta - g.z[0]) / g.dz).floor() as isize - 1).clamp(0, nz - 4);
    let radius = |i: isize| if i >= 0 { g.r_c[i as usize] } else { -g.r_c[(-1 - i) as usize] };
    let rn: Vec<f64> = (i0..i0 + 4).map(radius).collect();
    let zn: Vec<f64> = (j0..j0 + 4).map(|j| g.z[j as usize]).collect();
    let wr = &crate::stencil::fornberg_weights(rho, &rn, 0)[0];
    let wz = &crate::stencil::fornberg_weights(zeta, &zn, 0)[0];
    let odd = [true, true, false];
    let mut out = [0.0; 3];
    for (c, m) in v.comps().into_iter().enumerate() {
        let mut acc = 0.0;
        for (a, i) in (i0..i0 + 4).enumerate() {
            let (col, sign) = if i >= 0 { (i as usize, 1.0) } else { ((-1 - i) as usize, if odd[c] { -1.0 } else { 1.0 }) };
            let mut col_acc = 0.0;
            for (b, j) in (j0..j0 + 4).enumerate() {
                col_acc += wz[b] * m[(j as usize, col)];
            }
            acc += wr[a] * sign * col_acc;
        }
        out[c] = acc;
    }
    out
}

/// Weak residual by tensor Gauss–Legendre in physical `(r, z)` and `log t`;
/// `X` is interpolated cubically in `τ` and in space.
pub fn weak_terms(force: &BackgroundForce, x: Option<&Trajectory>, phi: &TestFunction, rule: QuadratureRule) -> Result<WeakTerms> {
    terms_against(force, force, x, phi, rule)
}

/// Fields of `fields` plus `x` against the force of `force`.
fn terms_against(
    fields: &BackgroundForce,
    force: &BackgroundForce,
    x: Option<&Trajectory>,
    phi: &TestFunction,
    rule: QuadratureRule,
) -> Result<WeakTerms> {
    let ev = fields.evaluator();
    let (beta, eps) = (fields.beta, fields.epsilon);
    let rq = composite((phi.r0 - phi.sigma).max(0.0), phi.r0 + phi.sigma, rule.panels, rule.nodes);
    let zq = composite(phi.z0 - phi.sigma, phi.z0 + phi.sigma, rule.panels, rule.nodes);
    let tq = composite(phi.tau_c - phi.tau_w, phi.tau_c + phi.tau_w, rule.panels, rule.nodes);
    let mut out = WeakTerms::default();
    for &(tau, wt) in &tq {
        let t = tau.exp();
        let s = t.sqrt();
        let state = match x {
            Some(x) => {
                let xs = x.at(tau)?;
                Some((xs.velocity(), xs.magnetic()))
            }
            None => None,
        };
        for &(r, wr) in &rq {
            let rho = r / s;
            let p = ev.at(rho);
            let v0 = [0.0, beta * p.swirl(rho) / s, 0.0];
            let h0 = [0.0, 0.0, beta * eps * p.b / s];
            let (f_theta, f_z) = force.at(rho);
            let (f1, f2) = ([0.0, f_theta / (t * s), 0.0], [0.0, 0.0, f_z / (t * s)]);
            for &(z, wz) in &zq {
                if !phi.in_support(r, z, t) {
                    continue;
                }
                let (v, h) = match &state {
                    Some((xv, xw)) => (
                        add(v0, scale(interpolate(xv, rho, z / s), 1.0 / s)),
                        add(h0, scale(interpolate(xw, rho, z / s), 1.0 / s)),
                    ),
                    None => (v0, h0),
                };
                let j = phi.jets(r, z, t);
                let w = wt * wr * wz * 2.0 * PI * r * t;
                let (m, i) = integrand(v, h, &j, r);
                let val = [j[0].v, j[1].v, j[2].v];
                out.momentum += w * m;
                out.induction += w * i;
                out.force_momentum += w * dot(f1, val);
                out.force_induction += w * dot(f2, val);
                out.norm += w * h1_density(&j, r);
            }
        }
    }
    out.norm = out.norm.sqrt();
    Ok(out)
}

/// Weak residual of one solution against one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub index: usize,
    pub momentum: f64,
    pub induction: f64,
    pub norm: f64,
    /// `max(|momentum|, |induction|) / norm`
    pub relative: f64,
}

/// Options of the verification pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub quadrature: QuadratureRule,
    pub residual_tol: f64,
    pub energy_tol: f64,
    pub slope_tol: f64,
    pub min_bank: usize,
    /// `λ` of the scaling check
    pub lambda: f64,
    pub scaling_tol: f64,
    /// test functions used by the scaling check
    pub scaling_count: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            quadrature: QuadratureRule::default(),
            residual_tol: 1e-5,
            energy_tol: 1e-5,
            slope_tol: 0.05,
            min_bank: 20,
            lambda: 2.0,
            scaling_tol: 1e-8,
            scaling_count: 4,
        }
    }
}

impl VerifyOptions {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let q = &self.quadrature;
        if q.panels == 0 || q.nodes < 2 {
            v.push("verify.quadrature: panels >= 1 and nodes >= 2 required".into());
        }
        for (name, x) in [
            ("residual_tol", self.residual_tol),
            ("energy_tol", self.energy_tol),
            ("slope_tol", self.slope_tol),
            ("scaling_tol", self.scaling_tol),
        ] {
            if !(x > 0.0) {
                v.push(format!("verify.{name} = {x} must be > 0"));
            }
        }
        if !(self.lambda > 0.0) || self.lambda == 1.0 {
            v.push(format!("verify.lambda = {} must be positive and != 1", self.lambda));
        }
        v
    }
}

/// Weak residuals over a bank: the background alone when `x` is `None`,
/// otherwise `βΞ₀ + X`.
pub fn weak_residuals(
    force: &BackgroundForce,
    x: Option<&Trajectory>,
    bank: &[TestFunction],
    opts: &VerifyOptions,
) -> Result<Vec<WeakResidual>> {
    bank.par_iter()
        .enumerate()
        .map(|(index, phi)| {
            let b = weak_terms(force, x, phi, opts.quadrature)?;
            let (m, i) = b.residual();
            Ok(WeakResidual {
                index,
                momentum: m,
                induction: i,
                norm: b.norm,
                relative: m.abs().max(i.abs()) / b.norm.max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

/// Unscaled background integrals over the box `[0, R] × [−Z, Z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundIntegrals {
    /// `‖Ξ₀‖²`
    pub l2: f64,
    /// `‖∇Ξ₀‖²`
    pub gradient: f64,
    /// `⟨F, Ξ₀⟩` with the force at its own `β`
    pub work: f64,
    /// boundary inflow `C_B`
    pub inflow: f64,
}

pub fn background_integrals(force: &BackgroundForce, r_max: f64, z_max: f64) -> BackgroundIntegrals {
    let ev = force.evaluator();
    let eps = force.epsilon;
    let c = 4.0 * PI * z_max;
    let l2_density = |r: f64| {
        let p = ev.at(r);
        p.swirl(r).powi(2) + (eps * p.b).powi(2)
    };
    let l2 = c * radial_quadrature(r_max, 64, |r| l2_density(r) * r);
    let gradient = c * radial_quadrature(r_max, 64, |r| {
        let p = ev.at(r);
        (p.d_swirl(r).powi(2) + (p.swirl(r) / r).powi(2) + (eps * p.d_b).powi(2)) * r
    });
    let work = c * radial_quadrature(r_max, 64, |r| {
        let p = ev.at(r);
        let (f_theta, f_z) = force.at(r);
        (f_theta * p.swirl(r) + f_z * eps * p.b) * r
    });
    let pr = ev.at(r_max);
    let inflow = PI * r_max * r_max * z_max * l2_density(r_max)
        + PI * z_max * radial_quadrature(r_max, 64, |r| l2_density(r) * r)
        + 4.0 * PI * r_max * z_max * (pr.swirl(r_max) * pr.d_swirl(r_max) + eps * eps * pr.b * pr.d_b);
    BackgroundIntegrals { l2, gradient, work, inflow }
}

/// `‖∇U‖²` of a collocated field, hoop terms included.
fn gradient_squared(u: &VectorField) -> f64 {
    let g = &u.grid;
    let d = u.derivatives();
    let mut q = g.zeros_centre();
    for c in 0..3 {
        q += d.dr[c].component_mul(&d.dr[c]) + d.dz[c].component_mul(&d.dz[c]);
    }
    for (i, &r) in g.r_c.iter().enumerate() {
        for j in 0..g.n_z {
            q[(j, i)] += (u.r[(j, i)].powi(2) + u.theta[(j, i)].powi(2)) / (r * r);
        }
    }
    g.integrate_centre(&q)
}

/// Energy and energy rate of `βΞ₀ + X` along the stored `τ` nodes:
/// `E = ½e^{τ/2}‖Ξ‖²`, `dE/dτ = e^{τ/2}(⟨F, Ξ⟩ − ‖∇Ξ‖² + β²C_B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyHistory {
    pub tau: Vec<f64>,
    pub energy: Vec<f64>,
    pub rate: Vec<f64>,
}

pub fn energy_history(force: &BackgroundForce, x: &Trajectory, include_perturbation: bool) -> Result<EnergyHistory> {
    let g = x.states[0].grid.clone();
    let (r_max, z_max) = box_extent(&g)?;
    let bi = background_integrals(force, r_max, z_max);
    let beta = force.beta;
    let ev = force.evaluator();
    let eps = force.epsilon;
    let n = x.states.len();
    let per_node: Vec<(f64, f64, f64)> = x
        .states
        .par_iter()
        .map(|s| {
            if !include_perturbation {
                return (0.0, 0.0, 0.0);
            }
            let (xv, xw) = (s.velocity(), s.magnetic());
            let (dv, dw) = (xv.derivatives(), xw.derivatives());
            let mut cross = g.zeros_centre();
            let mut cross_grad = g.zeros_centre();
            let mut work = g.zeros_centre();
            for (i, &r) in g.r_c.iter().enumerate() {
                let p = ev.at(r);
                let (f_theta, f_z) = force.at(r);
                for j in 0..g.n_z {
                    cross[(j, i)] = p.swirl(r) * xv.theta[(j, i)] + eps * p.b * xw.z[(j, i)];
                    cross_grad[(j, i)] = p.d_swirl(r) * dv.dr[1][(j, i)]
                        + p.swirl(r) * xv.theta[(j, i)] / (r * r)
                        + eps * p.d_b * dw.dr[2][(j, i)];
                    work[(j, i)] = f_theta * xv.theta[(j, i)] + f_z * xw.z[(j, i)];
                }
            }
            let l2 = l2_velocity(s).powi(2) + l2_magnetic(s).powi(2) + 2.0 * beta * g.integrate_centre(&cross);
            let grad = gradient_squared(&xv) + gradient_squared(&xw) + 2.0 * beta * g.integrate_centre(&cross_grad);
            (l2, grad, g.integrate_centre(&work))
        })
        .collect();
    let mut out = EnergyHistory {
        tau: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        rate: Vec::with_capacity(n),
    };
    for (k, &(l2, grad, work)) in per_node.iter().enumerate() {
        let tau = x.tau0 + k as f64 * x.dtau;
        let e = (0.5 * tau).exp();
        let norm2 = beta * beta * bi.l2 + l2;
        let grad2 = beta * beta * bi.gradient + grad;
        let w = beta * bi.work + work;
        out.tau.push(tau);
        out.energy.push(0.5 * e * norm2);
        out.rate.push(e * (w - grad2 + beta * beta * bi.inflow));
    }
    Ok(out)
}

/// `∫_{τ₀}^{τ_k} f` at every node, from local cubic interpolants.
pub fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let piece = if n < 4 {
            0.5 * h * (f[k] + f[k + 1])
        } else if k == 0 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if k == n - 2 {
            h / 24.0 * (f[n - 4] - 5.0 * f[n - 3] + 19.0 * f[n - 2] + 9.0 * f[n - 1])
        } else {
            h / 24.0 * (-f[k - 1] + 13.0 * f[k] + 13.0 * f[k + 1] - f[k + 2])
        };
        out[k + 1] = out[k] + piece;
    }
    out
}

/// Energy inequality slack `E(τ₀) + ∫_{τ₀}^{τ} rate − E(τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySlack {
    /// minimum over node pairs `τ₀ < τ`
    pub min_slack: f64,
    /// `max E`
    pub scale: f64,
    pub relative: f64,
}

impl EnergyHistory {
    pub fn slack(&self) -> EnergySlack {
        let h = if self.tau.len() > 1 { self.tau[1] - self.tau[0] } else { 0.0 };
        let c = cumulative_integral(&self.rate, h);
        let g: Vec<f64> = self.energy.iter().zip(&c).map(|(e, c)| e - c).collect();
        // slack(j, k) = g_j − g_k
        let mut low = f64::INFINITY;
        let mut min_slack = f64::INFINITY;
        for (k, &gk) in g.iter().enumerate() {
            if k > 0 {
                min_slack = min_slack.min(low - gk);
            }
            low = low.min(gk);
        }
        let scale = self.energy.iter().cloned().fold(0.0, f64::max);
        let min_slack = if min_slack.is_finite() { min_slack } else { 0.0 };
        EnergySlack {
            min_slack,
            scale,
            relative: min_slack / scale.max(f64::MIN_POSITIVE),
        }
    }
}

/// Reads JSON `null` (how non-finite floats are written) as NaN.
pub(crate) fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One acceptance item with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub value: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value >= tolerance,
        }
    }
}

/// Residuals and energy of one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub label: String,
    pub residuals: Vec<WeakResidual>,
    pub max_relative: f64,
    pub energy: EnergySlack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub bank: Vec<TestFunction>,
    pub solutions: Vec<SolutionReport>,
    pub separation_slope: f64,
    pub separation_r2: f64,
    pub expected_slope: f64,
    /// `max |R_λ(φ_λ)·λ² / R(φ) − 1|` over the scaling subset
    pub scaling_defect: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Weak-form, energy, separation and scaling checks of the pair. `window`
/// is the `τ` span of the test bank ending at the last stored time.
pub fn verify_pair(pair: &SolutionPair, window: f64, opts: &VerifyOptions) -> Result<VerificationReport> {
    let errs = opts.violations();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let x = &pair.perturbation;
    let (r_max, z_max) = box_extent(pair.grid())?;
    let window = window.min(x.tau_end() - x.tau0);
    let bank = test_bank(r_max, z_max, x.tau_end(), window);
    let force = pair.force.as_ref();
    let mut solutions = Vec::new();
    let mut checks = vec![Check::at_least("bank size", bank.len() as f64, opts.min_bank as f64)];
    for (label, perturbation) in [("background", None), ("second", Some(x))] {
        let residuals = weak_residuals(force, perturbation, &bank, opts)?;
        let max_relative = residuals.iter().map(|r| r.relative).fold(0.0, f64::max);
        let energy = energy_history(force, x, perturbation.is_some())?.slack();
        checks.push(Check::at_most(&format!("{label}: weak residual"), max_relative, opts.residual_tol));
        checks.push(Check::at_least(&format!("{label}: energy slack"), energy.relative, -opts.energy_tol));
        solutions.push(SolutionReport {
            label: label.into(),
            residuals,
            max_relative,
            energy,
        });
    }
    let a = pair.a;
    let lo = x.tau0;
    let hi = (x.tau0 + 2.0 / a).min(x.tau_end());
    let (separation_slope, separation_r2) = pair.separation_slope(lo.exp(), hi.exp());
    let expected_slope = 0.25 + a;
    let slope_err = ((separation_slope - expected_slope) / expected_slope).abs();
    checks.push(Check::at_most("separation slope relative error", slope_err, opts.slope_tol));
    let scaling_defect = scaling_defect(pair, &bank[..opts.scaling_count.min(bank.len())], opts)?;
    checks.push(Check::at_most("scaling defect", scaling_defect, opts.scaling_tol));
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        bank,
        solutions,
        separation_slope,
        separation_r2,
        expected_slope,
        scaling_defect,
        checks,
        pass,
    })
}

/// Residuals of `U_λ` against `φ_λ` equal `λ^{−2}` times those of `U` against `φ`.
fn scaling_defect(pair: &SolutionPair, bank: &[TestFunction], opts: &VerifyOptions) -> Result<f64> {
    let lambda = opts.lambda;
    let scaled = pair.rescaled(lambda)?;
    let scaled_bank: Vec<TestFunction> = bank.iter().map(|p| p.rescaled(lambda)).collect();
    let a = weak_residuals(&pair.force, Some(&pair.perturbation), bank, opts)?;
    let b = weak_residuals(&scaled.force, Some(&scaled.perturbation), &scaled_bank, opts)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(a, b)| {
            let s = a.momentum.abs().max(a.induction.abs()).max(f64::MIN_POSITIVE);
            let dm = (b.momentum * lambda * lambda - a.momentum).abs();
            let di = (b.induction * lambda * lambda - a.induction).abs();
            dm.max(di) / s
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axi_fields::{AxiField, Frame, GridRZ, ZTopology};
    use crate::profiles::ProfileSpec;
    use std::sync::Arc;

    fn phi() -> TestFunction {
        TestFunction {
            r0: 0.4,
            z0: 0.1,
            sigma: 0.3,
            tau_c: -1.0,
            tau_w: 1.0,
            poloidal: [1.0, 0.5, -0.3],
            toroidal: [0.7, -0.2, 0.4],
        }
    }

    fn force(beta: f64) -> BackgroundForce {
        BackgroundForce::new(&ProfileSpec::default_mri(0.5), beta).unwrap()
    }

    #[test]
    fn test_functions_are_solenoidal() {
        for p in [TestFunction { r0: 0.5, ..phi() }, TestFunction { r0: 0.0, sigma: 0.5, ..phi() }] {
            for &(r, z) in &[(0.3, 0.0), (0.5, 0.2), (0.2, -0.05), (0.05, 0.1)] {
                let j = p.jets(r, z, (-0.8f64).exp());
                let div = j[0].v / r + j[0].dr + j[2].dz;
                let size = j.iter().map(|c| c.dr.abs() + c.dz.abs()).sum::<f64>();
                assert!(div.abs() < 1e-12 * size.max(1.0), "{r} {z} {div}");
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let p = phi();
        let (r, z, t) = (0.5, 0.2, (-1.2f64).exp());
        let j = p.jets(r, z, t);
        let h = 1e-4;
        for c in 0..3 {
            let f = |r: f64, z: f64, t: f64| p.value(r, z, t)[c];
            let dr = (f(r + h, z, t) - f(r - h, z, t)) / (2.0 * h);
            let dz = (f(r, z + h, t) - f(r, z - h, t)) / (2.0 * h);
            let dt = (f(r, z, t + h * t) - f(r, z, t - h * t)) / (2.0 * h * t);
            let drr = (f(r + h, z, t) - 2.0 * f(r, z, t) + f(r - h, z, t)) / (h * h);
            let dzz = (f(r, z + h, t) - 2.0 * f(r, z, t) + f(r, z - h, t)) / (h * h);
            let tol = |x: f64| 1e-5 * x.abs().max(1.0);
            assert!((j[c].v - f(r, z, t)).abs() < 1e-14);
            assert!((j[c].dr - dr).abs() < tol(dr), "{c} dr {} {dr}", j[c].dr);
            assert!((j[c].dz - dz).abs() < tol(dz), "{c} dz");
            assert!((j[c].dt - dt).abs() < tol(dt), "{c} dt {} {dt}", j[c].dt);
            assert!((j[c].drr - drr).abs() < 1e3 * tol(drr), "{c} drr");
            assert!((j[c].dzz - dzz).abs() < 1e3 * tol(dzz), "{c} dzz");
        }
        assert_eq!(p.jets(2.0, 0.0, t), [Jet::default(); 3]);
    }

    #[test]
    fn bank_fits_the_box() {
        let (r_max, z_max) = (6.0, 5.0);
        let bank = test_bank(r_max, z_max, -1.0, 8.0);
        assert_eq!(bank.len(), 24);
        for p in &bank {
            assert!(p.tau_c - p.tau_w >= -9.0 - 1e-12 && p.tau_c + p.tau_w <= -1.0 + 1e-12);
            let s = (0.5 * (p.tau_c - p.tau_w)).exp();
            assert!((p.r0 + p.sigma) / s <= 0.85 * r_max);
            assert!(p.r0 == 0.0 || p.r0 >= p.sigma);
            assert!((p.z0.abs() + p.sigma) / s <= 0.85 * z_max);
        }
    }

    #[test]
    fn cumulative_integral_is_exact_on_cubics() {
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        let big = |x: f64| x + 0.5 * x * x - 2.0 / 3.0 * x.powi(3) + 0.125 * x.powi(4);
        let h = 0.3;
        let v: Vec<f64> = (0..9).map(|k| f(k as f64 * h)).collect();
        let c = cumulative_integral(&v, h);
        for (k, c) in c.iter().enumerate() {
            assert!((c - big(k as f64 * h)).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn background_integrals_satisfy_energy_identity() {
        // ¼‖Ξ₀‖² = ⟨F/β, Ξ₀⟩ + C_B − ‖∇Ξ₀‖²
        for (r_max, z_max) in [(6.0, 6.0), (12.0, 4.0)] {
            let f = force(25.0);
            let b = background_integrals(&f, r_max, z_max);
            let lhs = 0.25 * b.l2;
            let rhs = b.work / 25.0 + b.inflow - b.gradient;
            assert!((lhs - rhs).abs() < 1e-9 * lhs, "{lhs} {rhs}");
        }
    }

    #[test]
    fn background_weak_residual_vanishes() {
        let f = force(25.0);
        for p in test_bank(6.0, 6.0, 0.0, 6.0).iter().step_by(5) {
            let b = weak_terms(&f, None, p, QuadratureRule::default()).unwrap();
            let (m, i) = b.residual();
            let scale = b.force_momentum.abs().max(b.force_induction.abs());
            assert!(m.abs().max(i.abs()) < 1e-6 * b.norm, "{p:?} {b:?}");
            assert!(scale > 1e-4 * b.norm, "force must be exercised: {b:?}");
        }
    }

    #[test]
    fn wrong_force_is_detected() {
        let p = test_bank(6.0, 6.0, 0.0, 6.0)[0];
        let b = terms_against(&force(25.0), &force(25.5), None, &p, QuadratureRule::default()).unwrap();
        let (m, i) = b.residual();
        assert!(m.abs().max(i.abs()) > 1e-3 * b.norm, "{b:?}");
    }

    fn sampled_background(g: &Arc<GridRZ>, beta: f64) -> AxiField {
        let f = force(beta);
        let mut x = AxiField::zeros(g, Frame::Similarity);
        x.u_theta = g.sample_centre(|r, _| f.background_at(r).0);
        x
    }

    #[test]
    fn interpolated_fields_match_analytic_residual() {
        // the swirl of βΞ₀ carried as a perturbation of the zero background;
        // the uniform axial field drops out of the momentum residual
        let p = test_bank(6.0, 6.0, 0.0, 4.0)[2];
        let f = force(25.0);
        let exact = weak_terms(&f, None, &p, QuadratureRule::default()).unwrap();
        let mut errs = Vec::new();
        for n in [24, 48] {
            let g = GridRZ::new(n, n, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
            let x = sampled_background(&g, 25.0);
            let tr = Trajectory::new(-4.0, 0.5, vec![x; 9]).unwrap();
            let got = weak_terms(&force(0.0), Some(&tr), &p, QuadratureRule::default()).unwrap();
            errs.push((got.momentum - exact.momentum).abs());
        }
        let scale = exact.force_momentum.abs();
        assert!(errs[1] < 1e-3 * scale, "{errs:?} {scale}");
        assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
    }

    #[test]
    fn interpolation_is_exact_on_cubics_with_parity() {
        let g = GridRZ::new(12, 10, 3.0, ZTopology::Truncated { z_max: 2.0 }).unwrap();
        let cubic = |r: f64, z: f64| [r * (1.0 - z * z * z), r * r * r + r * z, 1.0 + r * r * z - 0.3 * z * z * z];
        let v = VectorField::from_fn(&g, VectorField::VELOCITY_CLASSES, cubic);
        for &(r, z) in &[(0.01, 0.3), (0.2, -1.9), (1.3, 0.77), (2.95, 1.9)] {
            let got = interpolate(&v, r, z);
            let want = cubic(r, z);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-12, "{r} {z} {c} {got:?} {want:?}");
            }
        }
    }

    fn pair() -> SolutionPair {
        let g = GridRZ::new(24, 24, 6.0, ZTopology::Truncated { z_max: 6.0 }).unwrap();
        let mut eta = AxiField::zeros(&g, Frame::Similarity);
        eta.u_theta = g.sample_centre(|r, z| r * (-(r * r + z * z)).exp());
        eta.phi = g.sample_face(|r, z| r * r * (-(r * r + z * z)).exp());
        let a = 0.4;
        let states = (0..161).map(|k| eta.scaled(0.1 * (a * (-8.0 + 0.05 * k as f64)).exp())).collect();
        SolutionPair::new(Arc::new(force(25.0)), Trajectory::new(-8.0, 0.05, states).unwrap(), a).unwrap()
    }

    #[test]
    fn background_energy_balance_closes() {
        let p = pair();
        let e = energy_history(&p.force, &p.perturbation, false).unwrap();
        let s = e.slack();
        // fourth-order accurate rate integral
        assert!(s.relative.abs() < 1e-7, "{s:?}");
    }

    #[test]
    fn scaling_defect_is_roundoff() {
        let p = pair();
        let bank = test_bank(6.0, 6.0, 0.0, 4.0);
        let d = scaling_defect(&p, &bank[..2], &VerifyOptions::default()).unwrap();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn constructed_pair_passes_the_discretisation_independent_checks() {
        let c = crate::nonuniqueness::construction::tests::construction(0.0, 1.0);
        let fp = c.fixed_point().unwrap();
        let a = c.config.a;
        let beta = crate::nonuniqueness::construction::tests::BETA;
        let f = BackgroundForce::new(&ProfileSpec::default_mri(crate::nonuniqueness::construction::tests::EPS), beta).unwrap();
        let pair = SolutionPair::new(Arc::new(f), fp.total_perturbation().unwrap(), a).unwrap();
        let rep = verify_pair(&pair, 2.0 / a, &VerifyOptions::default()).unwrap();
        let by_name = |n: &str| rep.checks.iter().find(|c| c.name == n).unwrap().clone();
        for n in ["bank size", "background: weak residual", "background: energy slack", "second: energy slack", "separation slope relative error", "scaling defect"] {
            assert!(by_name(n).pass, "{:?}", by_name(n));
        }
        // the second solution is only as accurate as its 16 × 16 grid
        let second = by_name("second: weak residual");
        assert!(second.value > 0.0 && second.value < 1e-2, "{second:?}");
        assert_eq!(rep.solutions[1].residuals.len(), 24);
    }

    #[test]
    fn options_report_every_violation() {
        let o = VerifyOptions {
            quadrature: QuadratureRule { panels: 0, ..Default::default() },
            residual_tol: -1.0,
            lambda: 1.0,
            ..Default::default()
        };
        assert_eq!(o.violations().len(), 3);
    }
}
