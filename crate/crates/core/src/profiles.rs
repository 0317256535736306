//! Radial angular-velocity and magnetic profiles of the rotating steady state
//! `v₀ = r ω(r) e_θ`, `H₀ = ε b(r) e_z`, their decay diagnostics and the
//! Rayleigh-type potential entering the radial operators.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::stencil;

/// Analytic family (or tabulated data) defining `ω` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// `ω = c (1+r²)^(−p)`, `b = b₀ + b₁ (1+r²)^(−q)`; parameters `[c, p, b₀, b₁, q]`.
    RationalDecay,
    /// `ω = c exp(−r²/s²)`, `b = b₀ + b₁ exp(−r²/q²)`; parameters `[c, s, b₀, b₁, q]`.
    GaussianDecay,
    /// Tabulated `(r, ω, b)`; derivatives by 4th-order finite differences.
    UserTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTable {
    pub r: Vec<f64>,
    pub omega: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    #[serde(default)]
    pub parameters: Vec<f64>,
    pub epsilon: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<ProfileTable>,
}

fn default_beta() -> f64 {
    1.0
}

/// Values and closed-form derivatives at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub omega: f64,
    pub d_omega: f64,
    pub d2_omega: f64,
    pub b: f64,
    pub d_b: f64,
    pub d2_b: f64,
}

impl PointValues {
    /// Swirl velocity `v = rω`.
    pub fn swirl(&self, r: f64) -> f64 {
        r * self.omega
    }

    pub fn d_swirl(&self, r: f64) -> f64 {
        self.omega + r * self.d_omega
    }

    pub fn d2_swirl(&self, r: f64) -> f64 {
        2.0 * self.d_omega + r * self.d2_omega
    }

    pub fn d_omega2(&self) -> f64 {
        2.0 * self.omega * self.d_omega
    }
}

impl ProfileSpec {
    /// `ω = (1+r²)^(−3/4)`, `b ≡ 1`.
    pub fn default_mri(epsilon: f64) -> Self {
        Self {
            kind: ProfileKind::RationalDecay,
            parameters: vec![1.0, 0.75, 1.0, 0.0, 1.0],
            epsilon,
            beta: 1.0,
            table: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            errs.push(format!("epsilon must be > 0 (got {})", self.epsilon));
        }
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            errs.push(format!("beta must be >= 1 (got {})", self.beta));
        }
        match self.kind {
            ProfileKind::RationalDecay | ProfileKind::GaussianDecay => {
                if self.parameters.len() != 5 {
                    errs.push(format!(
                        "{:?} expects 5 parameters [c, p|s, b0, b1, q], got {}",
                        self.kind,
                        self.parameters.len()
                    ));
                } else if self.kind == ProfileKind::GaussianDecay
                    && (self.parameters[1] <= 0.0 || self.parameters[4] <= 0.0)
                {
                    errs.push("gaussian widths s and q must be positive".into());
                }
            }
            ProfileKind::UserTable => match &self.table {
                None => errs.push("user-table profile requires a table".into()),
                Some(t) => {
                    if t.r.len() != t.omega.len() || t.r.len() != t.b.len() {
                        errs.push("table columns have different lengths".into());
                    }
                    if t.r.len() < 5 {
                        errs.push("table needs at least 5 rows".into());
                    }
                    if let Err(e) = check_grid(&t.r) {
                        errs.push(format!("table radii: {e}"));
                    }
                }
            },
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(errs.join("; ")))
        }
    }

    /// Closed-form point evaluation for the analytic families.
    pub fn eval_point(&self, r: f64) -> Option<PointValues> {
        let p = &self.parameters;
        match self.kind {
            ProfileKind::RationalDecay => {
                let (c, ex, b0, b1, q) = (p[0], p[1], p[2], p[3], p[4]);
                let s = 1.0 + r * r;
                let omega = c * s.powf(-ex);
                let d_omega = -2.0 * ex * c * r * s.powf(-ex - 1.0);
                let d2_omega = -2.0 * ex * c * s.powf(-ex - 2.0) * (s - 2.0 * (ex + 1.0) * r * r);
                let b = b0 + b1 * s.powf(-q);
                let d_b = -2.0 * q * b1 * r * s.powf(-q - 1.0);
                let d2_b = -2.0 * q * b1 * s.powf(-q - 2.0) * (s - 2.0 * (q + 1.0) * r * r);
                Some(PointValues {
                    omega,
                    d_omega,
                    d2_omega,
                    b,
                    d_b,
                    d2_b,
                })
            }
            ProfileKind::GaussianDecay => {
                let (c, sw, b0, b1, q) = (p[0], p[1], p[2], p[3], p[4]);
                let g = (-r * r / (sw * sw)).exp();
                let omega = c * g;
                let d_omega = -2.0 * r / (sw * sw) * omega;
                let d2_omega = omega * (4.0 * r * r / sw.powi(4) - 2.0 / (sw * sw));
                let gb = b1 * (-r * r / (q * q)).exp();
                let b = b0 + gb;
                let d_b = -2.0 * r / (q * q) * gb;
                let d2_b = gb * (4.0 * r * r / q.powi(4) - 2.0 / (q * q));
                Some(PointValues {
                    omega,
                    d_omega,
                    d2_omega,
                    b,
                    d_b,
                    d2_b,
                })
            }
            ProfileKind::UserTable => None,
        }
    }

    /// Point evaluation for every kind; tables are interpolated after being
    /// differentiated on their own nodes.
    pub fn evaluator(&self) -> Result<ProfileEvaluator> {
        self.validate()?;
        match self.kind {
            ProfileKind::UserTable => {
                let t = self.table.as_ref().expect("validated");
                let prof = eval_profile(self, &t.r)?;
                Ok(ProfileEvaluator::Table(Box::new(prof)))
            }
            _ => Ok(ProfileEvaluator::Analytic(self.clone())),
        }
    }
}

/// Evaluates a profile at arbitrary radii.
#[derive(Debug, Clone)]
pub enum ProfileEvaluator {
    Analytic(ProfileSpec),
    Table(Box<RadialProfile>),
}

impl ProfileEvaluator {
    pub fn at(&self, r: f64) -> PointValues {
        match self {
            Self::Analytic(spec) => spec.eval_point(r).expect("analytic family"),
            Self::Table(p) => {
                let f = |v: &[f64]| stencil::interpolate(&p.r, v, r, 4);
                PointValues {
                    omega: f(&p.omega),
                    d_omega: f(&p.d_omega),
                    d2_omega: f(&p.d2_omega),
                    b: f(&p.b),
                    d_b: f(&p.d_b),
                    d2_b: f(&p.d2_b),
                }
            }
        }
    }
}

/// Tabulated profile on a radial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub omega: Vec<f64>,
    pub b: Vec<f64>,
    /// ∂_r(ω²)
    pub d_omega2: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d2_b: Vec<f64>,
    pub d_omega: Vec<f64>,
    pub d2_omega: Vec<f64>,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["r", "omega", "b", "d_omega2", "d_b", "d2_b"])?;
        for i in 0..self.len() {
            w.write_record(
                [
                    self.r[i],
                    self.omega[i],
                    self.b[i],
                    self.d_omega2[i],
                    self.d_b[i],
                    self.d2_b[i],
                ]
                .iter()
                .map(|v| format!("{v:.17e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(r: &[f64]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if !(r[0] > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "first node must be > 0 (got {})",
            r[0]
        )));
    }
    if let Some(i) = r.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "nodes not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Geometrically stretched nodes on `[r_max·ratio, r_max]`.
pub fn geometric_grid(r_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    let r_min = r_max * ratio;
    let q = (r_max / r_min).ln() / (n - 1) as f64;
    (0..n).map(|i| r_min * (q * i as f64).exp()).collect()
}

/// Tabulates `ω`, `b` and the derivative tables on `grid`.
pub fn eval_profile(spec: &ProfileSpec, grid: &[f64]) -> Result<RadialProfile> {
    spec.validate()?;
    check_grid(grid)?;
    let n = grid.len();
    let prof = match spec.kind {
        ProfileKind::UserTable => {
            let t = spec.table.as_ref().expect("validated");
            let same = t.r.len() == n && t.r.iter().zip(grid).all(|(a, b)| a == b);
            let (omega, b) = if same {
                (t.omega.clone(), t.b.clone())
            } else {
                (
                    grid.iter().map(|&x| stencil::interpolate(&t.r, &t.omega, x, 4)).collect(),
                    grid.iter().map(|&x| stencil::interpolate(&t.r, &t.b, x, 4)).collect(),
                )
            };
            if n < 5 {
                return Err(Error::InvalidGrid("need at least 5 nodes".into()));
            }
            let omega2: Vec<f64> = omega.iter().map(|w: &f64| w * w).collect();
            RadialProfile {
                r: grid.to_vec(),
                d_omega2: stencil::differentiate(grid, &omega2, 1, 5),
                d_omega: stencil::differentiate(grid, &omega, 1, 5),
                d2_omega: stencil::differentiate(grid, &omega, 2, 5),
                d_b: stencil::differentiate(grid, &b, 1, 5),
                d2_b: stencil::differentiate(grid, &b, 2, 5),
                omega,
                b,
            }
        }
        _ => {
            let pts: Vec<PointValues> = grid
                .iter()
                .map(|&r| spec.eval_point(r).expect("analytic"))
                .collect();
            RadialProfile {
                r: grid.to_vec(),
                omega: pts.iter().map(|p| p.omega).collect(),
                b: pts.iter().map(|p| p.b).collect(),
                d_omega2: pts.iter().map(|p| p.d_omega2()).collect(),
                d_b: pts.iter().map(|p| p.d_b).collect(),
                d2_b: pts.iter().map(|p| p.d2_b).collect(),
                d_omega: pts.iter().map(|p| p.d_omega).collect(),
                d2_omega: pts.iter().map(|p| p.d2_omega).collect(),
            }
        }
    };
    if let Some(i) = prof.b.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidProfile(format!(
            "b must be positive; b({}) = {}",
            prof.r[i], prof.b[i]
        )));
    }
    Ok(prof)
}

/// Power-law fit of one quantity over one end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Fitted slope of `log|f|` against `log r`; `None` when `f ≡ 0` there.
    pub slope: Option<f64>,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// α from `∂_r(ω²) = O(r^(−3−2α))` at the outer end.
    pub alpha_fit: Option<f64>,
    /// β from `∂_r(ω²) = O(r^(β−3))` at the inner end.
    pub beta_fit: Option<f64>,
    pub outer_d_omega2: ExponentFit,
    pub outer_d_b: ExponentFit,
    pub outer_omega: ExponentFit,
    pub inner_d_omega2: ExponentFit,
    pub inner_d_b: ExponentFit,
    pub inner_ok: bool,
    pub outer_ok: bool,
    /// `ω = O(r^(−1−α))`, needed for finite energy of the background gradient.
    pub finite_energy_ok: bool,
}

impl DecayReport {
    pub fn passes(&self) -> bool {
        self.inner_ok && self.outer_ok && self.finite_energy_ok
    }

    pub fn failed_conditions(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.inner_ok {
            out.push("inner decay (r -> 0)");
        }
        if !self.outer_ok {
            out.push("outer decay (r -> inf)");
        }
        if !self.finite_energy_ok {
            out.push("finite energy: omega = O(r^(-1-alpha))");
        }
        out
    }
}

const ZERO_TOL: f64 = 1e-13;

fn fit_exponent(r: &[f64], f: &[f64], range: std::ops::Range<usize>) -> ExponentFit {
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let pts: Vec<(f64, f64)> = range
        .filter(|&i| f[i].abs() > ZERO_TOL * scale && f[i] != 0.0)
        .map(|i| (r[i].ln(), f[i].abs().ln()))
        .collect();
    if pts.len() < 3 || f.iter().all(|v| v.abs() <= ZERO_TOL) {
        return ExponentFit {
            slope: None,
            residual: 0.0,
        };
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, icpt, _) = linear_fit(&x, &y);
    let rms = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / x.len() as f64)
        .sqrt();
    ExponentFit {
        slope: Some(slope),
        residual: rms,
    }
}

/// Fits decay exponents over the innermost and outermost decade of the grid.
pub fn check_decay(profile: &RadialProfile) -> Result<DecayReport> {
    let r = &profile.r;
    let (r0, r1) = (r[0], r[r.len() - 1]);
    if r1 / r0 < 100.0 {
        return Err(Error::InsufficientDecade(format!(
            "grid spans {:.3} decades; need two (one inner decade [r_min, 10 r_min] and one outer decade [R_max/10, R_max])",
            (r1 / r0).log10()
        )));
    }
    let inner = 0..r.iter().position(|&x| x > 10.0 * r0).unwrap_or(r.len());
    let outer = r.iter().position(|&x| x >= r1 / 10.0).unwrap_or(0)..r.len();
    if inner.len() < 3 {
        return Err(Error::InsufficientDecade(
            "inner decade [r_min, 10 r_min] has fewer than 3 nodes".into(),
        ));
    }
    if outer.len() < 3 {
        return Err(Error::InsufficientDecade(
            "outer decade [R_max/10, R_max] has fewer than 3 nodes".into(),
        ));
    }
    let outer_d_omega2 = fit_exponent(r, &profile.d_omega2, outer.clone());
    let outer_d_b = fit_exponent(r, &profile.d_b, outer.clone());
    let outer_omega = fit_exponent(r, &profile.omega, outer);
    let inner_d_omega2 = fit_exponent(r, &profile.d_omega2, inner.clone());
    let inner_d_b = fit_exponent(r, &profile.d_b, inner);

    // O(r^s) with s beyond the threshold, or identically zero.
    let below = |f: &ExponentFit, bound: f64| f.slope.is_none_or(|s| s < bound);
    let above = |f: &ExponentFit, bound: f64| f.slope.is_none_or(|s| s > bound);

    Ok(DecayReport {
        alpha_fit: outer_d_omega2.slope.map(|s| (-3.0 - s) / 2.0),
        beta_fit: inner_d_omega2.slope.map(|s| s + 3.0),
        inner_ok: above(&inner_d_omega2, -3.0) && above(&inner_d_b, -1.0),
        outer_ok: below(&outer_d_omega2, -3.0) && below(&outer_d_b, -1.0),
        finite_energy_ok: below(&outer_omega, -1.0),
        outer_d_omega2,
        outer_d_b,
        outer_omega,
        inner_d_omega2,
        inner_d_b,
    })
}

/// Sign state of `∂_r(ω²)` on the interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RayleighState {
    /// `∂_r(ω²) > 0` everywhere.
    Stable,
    /// `∂_r(ω²)(r0) < 0` at the first such node.
    Unstable { r0: f64 },
    /// Neither strictly positive everywhere nor negative anywhere.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub stable_rayleigh: bool,
    pub r0: Option<f64>,
    pub state: RayleighState,
}

pub fn mri_criterion(profile: &RadialProfile) -> CriterionReport {
    let n = profile.len();
    let interior = 1..n.saturating_sub(1);
    let scale = profile
        .omega
        .iter()
        .zip(&profile.r)
        .map(|(w, r)| w * w / r)
        .fold(0.0f64, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let d = &profile.d_omega2;
    let state = if let Some(i) = interior.clone().find(|&i| d[i] < -tol) {
        RayleighState::Unstable { r0: profile.r[i] }
    } else if interior.clone().all(|i| d[i] > tol) && !interior.is_empty() {
        RayleighState::Stable
    } else {
        RayleighState::Marginal
    };
    CriterionReport {
        stable_rayleigh: state == RayleighState::Stable,
        r0: match state {
            RayleighState::Unstable { r0 } => Some(r0),
            _ => None,
        },
        state,
    }
}

/// `𝔉(r) = ∂_r(ω²)/(ε² b² r) + ∂_r²b/(r² b) − ∂_r b/(r³ b)` at every node.
pub fn rayleigh_potential(profile: &RadialProfile, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be > 0 (got {epsilon})"
        )));
    }
    (0..profile.len())
        .map(|i| {
            let (r, b) = (profile.r[i], profile.b[i]);
            if !(r > 0.0) || !(b > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "potential undefined at node {i} (r = {r}, b = {b})"
                )));
            }
            Ok(profile.d_omega2[i] / (epsilon * epsilon * b * b * r) + profile.d2_b[i] / (r * r * b)
                - profile.d_b[i] / (r * r * r * b))
        })
        .collect()
}

/// Steady background `v₀ = rω e_θ`, `H₀ = εb e_z` with flux `ψ₀ = −ε∫₀ʳ s b ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundField {
    pub r: Vec<f64>,
    pub v0_theta: Vec<f64>,
    #[serde(rename = "H0_z")]
    pub h0_z: Vec<f64>,
    pub psi0: Vec<f64>,
    pub beta: f64,
    pub epsilon: f64,
}

/// Cumulative `∫_{r_0}^{r_i} f` with a quintic through the six nodes nearest
/// each interval.
fn cumulative_integral(r: &[f64], f: &[f64]) -> Vec<f64> {
    const WIDTH: usize = 6;
    let n = r.len();
    let mut out = vec![0.0; n];
    if n < WIDTH {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * (f[i] + f[i - 1]) * (r[i] - r[i - 1]);
        }
        return out;
    }
    // 3-point Gauss-Legendre integrates the local quintic exactly.
    let gl = [
        (-(0.6f64).sqrt(), 5.0 / 9.0),
        (0.0, 8.0 / 9.0),
        ((0.6f64).sqrt(), 5.0 / 9.0),
    ];
    for i in 0..n - 1 {
        let start = (i + 1).saturating_sub(WIDTH / 2).min(n - WIDTH);
        let nodes = &r[start..start + WIDTH];
        let vals = &f[start..start + WIDTH];
        let (a, b) = (r[i], r[i + 1]);
        let mut s = 0.0;
        for (x, w) in gl {
            let xi = 0.5 * (a + b) + 0.5 * (b - a) * x;
            let lw = stencil::fornberg_weights(xi, nodes, 0);
            let v: f64 = lw[0].iter().zip(vals).map(|(p, q)| p * q).sum();
            s += w * v;
        }
        out[i + 1] = out[i] + 0.5 * (b - a) * s;
    }
    out
}

pub fn build_background(spec: &ProfileSpec, profile: &RadialProfile) -> Result<BackgroundField> {
    spec.validate()?;
    let r = &profile.r;
    let eps = spec.epsilon;
    let sb: Vec<f64> = r.iter().zip(&profile.b).map(|(r, b)| r * b).collect();
    let cum = cumulative_integral(r, &sb);
    // ∫₀^{r₀} s b ds for the even local fit b ≈ b(0⁺) + c s²
    let b_axis = profile.b[0] - 0.5 * r[0] * profile.d_b[0];
    let head = b_axis * r[0] * r[0] / 2.0 + profile.d_b[0] * r[0].powi(3) / 8.0;
    Ok(BackgroundField {
        r: r.clone(),
        v0_theta: r.iter().zip(&profile.omega).map(|(r, w)| r * w).collect(),
        h0_z: profile.b.iter().map(|b| eps * b).collect(),
        psi0: cum.iter().map(|c| -eps * (head + c)).collect(),
        beta: spec.beta,
        epsilon: eps,
    })
}

/// Writes any radial table as CSV with the given header.
pub fn write_table(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:.17e}", c[i])).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}
