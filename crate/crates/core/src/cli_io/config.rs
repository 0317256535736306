use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::axi_fields::{ZTopology, MAX_ORDER};
use crate::error::{Error, Result};
use crate::evolution::ArnoldiConfig;
use crate::nonuniqueness::VerifyOptions;
use crate::profiles::ProfileSpec;

/// Outcome the run is expected to certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    #[default]
    Any,
    Unstable,
    Stable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n_r: usize,
    pub n_z: usize,
    pub r_max: f64,
    pub z_topology: ZTopology,
}

impl GridBlock {
    fn violations(&self, field: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_r < 5 {
            out.push(format!("{field}.n_r = {} must be >= 5", self.n_r));
        }
        if self.n_z < 2 || self.n_z % 2 != 0 {
            out.push(format!("{field}.n_z = {} must be even and >= 2", self.n_z));
        }
        if !(self.r_max > 0.0) {
            out.push(format!("{field}.r_max = {} must be > 0", self.r_max));
        }
        match self.z_topology {
            ZTopology::Periodic { period } if !(period > 0.0) => {
                out.push(format!("{field}.z_topology.period = {period} must be > 0"))
            }
            ZTopology::Truncated { z_max } if !(z_max > 0.0) => {
                out.push(format!("{field}.z_topology.z_max = {z_max} must be > 0"))
            }
            _ => {}
        }
        out
    }
}

/// Radial inertia sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumBlock {
    pub n_r: usize,
    pub r_max: f64,
    /// innermost node as a fraction of `r_max`
    pub inner_ratio: f64,
    pub k_cap: u32,
    pub k_star_max: u32,
}

impl Default for SpectrumBlock {
    fn default() -> Self {
        Self {
            n_r: 512,
            r_max: 12.0,
            inner_ratio: 1e-4,
            k_cap: 64,
            k_star_max: 32,
        }
    }
}

/// Physical-frame linear evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionBlock {
    pub grid: GridBlock,
    /// `cfl / explicit_frequency` when absent
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
    pub fit_window: [f64; 2],
    /// multiple of the stabilizing `−ν₄Δ²` coefficient; 0 disables it
    pub hyperdiffusion_factor: f64,
    /// compare the growth fit with the propagator eigenvalue
    pub cross_check: bool,
    pub arnoldi: ArnoldiConfig,
    pub agreement_tol: f64,
    /// largest accepted `|Im λ| / Re λ`
    pub real_tol: f64,
}

impl Default for EvolutionBlock {
    fn default() -> Self {
        Self {
            grid: GridBlock {
                n_r: 48,
                n_z: 32,
                r_max: 8.0,
                z_topology: ZTopology::Periodic {
                    period: 2.0 * std::f64::consts::PI,
                },
            },
            dt: None,
            cfl: 0.9,
            t_end: 60.0,
            fit_window: [30.0, 60.0],
            hyperdiffusion_factor: 0.0,
            cross_check: false,
            arnoldi: ArnoldiConfig::default(),
            agreement_tol: 0.02,
            real_tol: 1e-3,
        }
    }
}

/// Sup of the ideal rate over axial wavenumbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdealBlock {
    pub n: usize,
    pub r_max: f64,
    pub k_lo: f64,
    pub k_hi: f64,
}

impl Default for IdealBlock {
    fn default() -> Self {
        Self {
            n: 300,
            r_max: 12.0,
            k_lo: 0.05,
            k_hi: 20.0,
        }
    }
}

/// Similarity-frame eigenproblem and the β = 0 decay check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityBlock {
    pub grid: GridBlock,
    /// field strength of the self-similar background
    pub epsilon: f64,
    pub betas: Vec<f64>,
    pub cfl: f64,
    pub arnoldi: ArnoldiConfig,
    pub real_tol: f64,
    pub ideal: IdealBlock,
    pub heat_t_end: f64,
    pub heat_window: [f64; 2],
    /// accepted excess over the `−1/4` bound
    pub heat_margin: f64,
}

impl Default for SimilarityBlock {
    fn default() -> Self {
        Self {
            grid: GridBlock {
                n_r: 32,
                n_z: 32,
                r_max: 12.0,
                z_topology: ZTopology::Truncated { z_max: 12.0 },
            },
            epsilon: 0.5,
            betas: vec![25.0, 50.0, 100.0],
            cfl: 0.9,
            arnoldi: ArnoldiConfig {
                horizon: 0.5,
                krylov_dim: 20,
                tol: 1e-9,
                ..ArnoldiConfig::default()
            },
            real_tol: 1e-3,
            ideal: IdealBlock::default(),
            heat_t_end: 6.0,
            heat_window: [2.0, 6.0],
            heat_margin: 0.03,
        }
    }
}

/// Duhamel fixed point and direct trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstructionBlock {
    pub tau_end: f64,
    /// `tau_end − tau_start` in units of `1/a`
    pub span_efoldings: f64,
    pub amplitude: f64,
    pub sobolev_order: usize,
    /// `a/2` when absent
    pub epsilon0: Option<f64>,
    pub picard_tol: f64,
    pub max_picard: usize,
    pub max_halvings: usize,
    pub max_ratio: f64,
    pub max_stored: usize,
    /// Duhamel against direct construction in the 𝕏 norm
    pub gap_tol: f64,
}

impl Default for ConstructionBlock {
    fn default() -> Self {
        Self {
            tau_end: 0.0,
            span_efoldings: 5.0,
            amplitude: 1.0,
            sobolev_order: 3,
            epsilon0: None,
            picard_tol: 1e-9,
            max_picard: 40,
            max_halvings: 5,
            max_ratio: 0.5,
            max_stored: 600,
            gap_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    /// test-bank window in units of `1/a`
    pub window_efoldings: f64,
    pub options: VerifyOptions,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            window_efoldings: 2.0,
            options: VerifyOptions::default(),
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub outdir: PathBuf,
    pub seed: u64,
    pub expect: Expectation,
    pub profile: ProfileSpec,
    pub spectrum: SpectrumBlock,
    pub evolution: EvolutionBlock,
    pub similarity: SimilarityBlock,
    pub construction: ConstructionBlock,
    pub verify: VerifyBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            outdir: PathBuf::from("runs"),
            seed: 1,
            expect: Expectation::Any,
            profile: ProfileSpec::default_mri(0.05),
            spectrum: SpectrumBlock::default(),
            evolution: EvolutionBlock::default(),
            similarity: SimilarityBlock::default(),
            construction: ConstructionBlock::default(),
            verify: VerifyBlock::default(),
        }
    }
}

const FIELDS: [&str; 9] = [
    "outdir",
    "seed",
    "expect",
    "profile",
    "spectrum",
    "evolution",
    "similarity",
    "construction",
    "verify",
];

fn take<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str, slot: &mut T, errs: &mut Vec<String>) {
    if let Some(v) = map.remove(key) {
        match serde_json::from_value(v) {
            Ok(x) => *slot = x,
            Err(e) => errs.push(format!("{key}: {e}")),
        }
    }
}

fn positive(out: &mut Vec<String>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        out.push(format!("{field} = {v} must be > 0"));
    }
}

fn window(out: &mut Vec<String>, field: &str, w: [f64; 2], end: f64) {
    if !(w[0] >= 0.0 && w[0] < w[1] && w[1] <= end) {
        out.push(format!("{field} = [{}, {}] must satisfy 0 <= lo < hi <= {end}", w[0], w[1]));
    }
}

fn arnoldi(out: &mut Vec<String>, field: &str, a: &ArnoldiConfig) {
    positive(out, &format!("{field}.horizon"), a.horizon);
    positive(out, &format!("{field}.tol"), a.tol);
    positive(out, &format!("{field}.target_multiplier"), a.target_multiplier);
    if a.krylov_dim < 3 {
        out.push(format!("{field}.krylov_dim = {} must be >= 3", a.krylov_dim));
    }
    if a.n_modes < 1 || a.n_modes >= a.krylov_dim {
        out.push(format!("{field}.n_modes = {} must lie in [1, krylov_dim)", a.n_modes));
    }
}

impl RunConfig {
    /// Every violated invariant, with the field path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.profile.validate() {
            out.push(format!("profile: {e}"));
        }
        let s = &self.spectrum;
        if s.n_r < 16 {
            out.push(format!("spectrum.n_r = {} must be >= 16", s.n_r));
        }
        positive(&mut out, "spectrum.r_max", s.r_max);
        if !(s.inner_ratio > 0.0 && s.inner_ratio < 1.0) {
            out.push(format!("spectrum.inner_ratio = {} must lie in (0, 1)", s.inner_ratio));
        }
        if s.k_cap < 2 {
            out.push(format!("spectrum.k_cap = {} must be >= 2", s.k_cap));
        }
        if s.k_star_max < 1 {
            out.push(format!("spectrum.k_star_max = {} must be >= 1", s.k_star_max));
        }

        let e = &self.evolution;
        out.extend(e.grid.violations("evolution.grid"));
        if let Some(dt) = e.dt {
            positive(&mut out, "evolution.dt", dt);
        }
        if !(e.cfl > 0.0 && e.cfl <= 1.0) {
            out.push(format!("evolution.cfl = {} must lie in (0, 1]", e.cfl));
        }
        positive(&mut out, "evolution.t_end", e.t_end);
        window(&mut out, "evolution.fit_window", e.fit_window, e.t_end);
        if !(e.hyperdiffusion_factor >= 0.0) {
            out.push(format!("evolution.hyperdiffusion_factor = {} must be >= 0", e.hyperdiffusion_factor));
        }
        arnoldi(&mut out, "evolution.arnoldi", &e.arnoldi);
        positive(&mut out, "evolution.agreement_tol", e.agreement_tol);
        positive(&mut out, "evolution.real_tol", e.real_tol);

        let m = &self.similarity;
        out.extend(m.grid.violations("similarity.grid"));
        if matches!(m.grid.z_topology, ZTopology::Periodic { .. }) {
            out.push("similarity.grid.z_topology: the similarity frame needs truncated z, not periodic".into());
        }
        positive(&mut out, "similarity.epsilon", m.epsilon);
        if m.betas.is_empty() {
            out.push("similarity.betas must not be empty".into());
        }
        if m.betas.iter().any(|b| !(*b > 0.0)) {
            out.push(format!("similarity.betas = {:?} must all be > 0", m.betas));
        }
        if m.betas.windows(2).any(|w| w[0] >= w[1]) {
            out.push(format!("similarity.betas = {:?} must be strictly increasing", m.betas));
        }
        if !(m.cfl > 0.0 && m.cfl <= 1.0) {
            out.push(format!("similarity.cfl = {} must lie in (0, 1]", m.cfl));
        }
        arnoldi(&mut out, "similarity.arnoldi", &m.arnoldi);
        positive(&mut out, "similarity.real_tol", m.real_tol);
        if m.ideal.n < 16 {
            out.push(format!("similarity.ideal.n = {} must be >= 16", m.ideal.n));
        }
        positive(&mut out, "similarity.ideal.r_max", m.ideal.r_max);
        if !(m.ideal.k_lo > 0.0 && m.ideal.k_lo < m.ideal.k_hi) {
            out.push(format!(
                "similarity.ideal k range [{}, {}] must satisfy 0 < k_lo < k_hi",
                m.ideal.k_lo, m.ideal.k_hi
            ));
        }
        positive(&mut out, "similarity.heat_t_end", m.heat_t_end);
        window(&mut out, "similarity.heat_window", m.heat_window, m.heat_t_end);
        positive(&mut out, "similarity.heat_margin", m.heat_margin);

        let c = &self.construction;
        if !(c.span_efoldings >= 5.0) {
            out.push(format!("construction.span_efoldings = {} must be >= 5", c.span_efoldings));
        }
        if !(c.amplitude >= 0.0) {
            out.push(format!("construction.amplitude = {} must be >= 0", c.amplitude));
        }
        if c.sobolev_order > MAX_ORDER {
            out.push(format!("construction.sobolev_order = {} must be <= {MAX_ORDER}", c.sobolev_order));
        }
        if let Some(e0) = c.epsilon0 {
            positive(&mut out, "construction.epsilon0", e0);
        }
        positive(&mut out, "construction.picard_tol", c.picard_tol);
        if c.max_picard < 2 {
            out.push(format!("construction.max_picard = {} must be >= 2", c.max_picard));
        }
        if !(c.max_ratio > 0.0 && c.max_ratio < 1.0) {
            out.push(format!("construction.max_ratio = {} must lie in (0, 1)", c.max_ratio));
        }
        if c.max_stored < 8 {
            out.push(format!("construction.max_stored = {} must be >= 8", c.max_stored));
        }
        positive(&mut out, "construction.gap_tol", c.gap_tol);

        positive(&mut out, "verify.window_efoldings", self.verify.window_efoldings);
        out.extend(self.verify.options.violations().into_iter().map(|v| format!("verify.options: {v}")));
        out
    }

    /// Spec of the self-similar background.
    pub fn similarity_profile(&self) -> ProfileSpec {
        ProfileSpec {
            epsilon: self.similarity.epsilon,
            ..self.profile.clone()
        }
    }

    /// SHA-256 of the canonical JSON of everything except `outdir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("outdir");
        }
        let text = serde_json::to_string(&v).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a JSON config, filling defaults and collecting all violations.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    from_value(value)
}

fn from_value(value: Value) -> Result<RunConfig> {
    let Value::Object(map) = value else {
        return Err(Error::Config(vec!["top level must be a JSON object".into()]));
    };
    let mut errs: Vec<String> = map
        .keys()
        .filter(|k| !FIELDS.contains(&k.as_str()))
        .map(|k| format!("unknown field `{k}`, expected one of {}", FIELDS.join(", ")))
        .collect();
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let Value::Object(mut base) = defaults else { unreachable!() };
    for (k, v) in map {
        let slot = base.entry(k).or_insert(Value::Null);
        merge(slot, v);
    }
    let mut map = base;
    let mut c = RunConfig::default();
    take(&mut map, "outdir", &mut c.outdir, &mut errs);
    take(&mut map, "seed", &mut c.seed, &mut errs);
    take(&mut map, "expect", &mut c.expect, &mut errs);
    take(&mut map, "profile", &mut c.profile, &mut errs);
    take(&mut map, "spectrum", &mut c.spectrum, &mut errs);
    take(&mut map, "evolution", &mut c.evolution, &mut errs);
    take(&mut map, "similarity", &mut c.similarity, &mut errs);
    take(&mut map, "construction", &mut c.construction, &mut errs);
    take(&mut map, "verify", &mut c.verify, &mut errs);
    errs.extend(c.violations());
    if errs.is_empty() {
        Ok(c)
    } else {
        Err(Error::Config(errs))
    }
}

/// Deep merge of `user` into `base`; objects carrying a `kind` tag replace
/// the default wholesale.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) if !u.contains_key("kind") => {
            for (k, v) in u {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, u) => *b = u,
    }
}

/// Applies `key=value` overrides to scalar fields, with dotted keys.
/// Values are read as JSON when they parse, and as strings otherwise.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    let mut errs = Vec::new();
    for o in overrides {
        if let Err(e) = set_path(&mut value, o) {
            errs.push(e);
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    from_value(value)
}

fn set_path(root: &mut Value, assignment: &str) -> std::result::Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("--set {assignment}: expected key=value"))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if new.is_object() || new.is_array() {
        return Err(format!("--set {key}: only scalar fields can be overridden"));
    }
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("--set {key}: empty path segment"));
    }
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let Value::Object(m) = node else {
            return Err(format!("--set {key}: `{p}` is not inside an object"));
        };
        node = m.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let Value::Object(m) = node else {
        return Err(format!("--set {key}: parent is not an object"));
    };
    let last = parts[parts.len() - 1];
    if matches!(m.get(last), Some(Value::Object(_) | Value::Array(_))) {
        return Err(format!("--set {key}: only scalar fields can be overridden"));
    }
    m.insert(last.to_string(), new);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.spectrum.k_cap, 64);
        assert_eq!(c.spectrum.n_r, 512);
        assert_eq!(c.profile.epsilon, 0.05);
        assert_eq!(c.similarity.betas, vec![25.0, 50.0, 100.0]);
        assert_eq!(c.verify.options.residual_tol, 1e-5);
        let c = parse_config(r#"{"spectrum": {"k_cap": 40}}"#).unwrap();
        assert_eq!(c.spectrum.k_cap, 40);
        assert_eq!(c.spectrum.r_max, 12.0);
        let c = parse_config(r#"{"profile": {"epsilon": 10}}"#).unwrap();
        assert_eq!(c.profile, ProfileSpec::default_mri(10.0));
    }

    #[test]
    fn zero_k_cap_names_field_and_bound() {
        let Err(Error::Config(errs)) = parse_config(r#"{"spectrum": {"k_cap": 0}}"#) else {
            panic!("accepted k_cap = 0");
        };
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("spectrum.k_cap") && errs[0].contains(">= 2"), "{}", errs[0]);
    }

    #[test]
    fn all_violations_are_reported() {
        let text = r#"{
            "bogus": 1,
            "spectrum": {"k_cap": 1, "r_max": -1},
            "evolution": {"extra": true},
            "similarity": {"grid": {"n_r": 16, "n_z": 16, "r_max": 6,
                                    "z_topology": {"kind": "periodic", "period": 6}}},
            "verify": {"options": {"residual_tol": 0}}
        }"#;
        let Err(Error::Config(errs)) = parse_config(text) else {
            panic!("accepted a bad config");
        };
        let has = |s: &str| errs.iter().any(|e| e.contains(s));
        assert!(has("bogus"), "{errs:?}");
        assert!(has("spectrum.k_cap"));
        assert!(has("spectrum.r_max"));
        assert!(has("evolution: unknown field `extra`"));
        assert!(has("periodic"));
        assert!(has("residual_tol"));
        assert_eq!(errs.len(), 6, "{errs:?}");
    }

    #[test]
    fn round_trip_parses_to_equal_config() {
        let text = r#"{"seed": 7, "expect": "unstable", "spectrum": {"k_cap": 20},
                       "profile": {"kind": "gaussian-decay", "parameters": [1, 2, 1, 0.5, 3], "epsilon": 0.1},
                       "construction": {"epsilon0": 0.04}}"#;
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let d = parse_config(&serde_json::to_string(&RunConfig::default()).unwrap()).unwrap();
        assert_eq!(d, RunConfig::default());
    }

    #[test]
    fn hash_ignores_outdir_but_not_physics() {
        let a = parse_config(r#"{"outdir": "x"}"#).unwrap();
        let b = parse_config(r#"{"outdir": "y"}"#).unwrap();
        let c = parse_config(r#"{"seed": 2}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides_touch_scalars_only() {
        let c = apply_overrides("{}", &["spectrum.k_cap=12".into(), "profile.epsilon=10".into(), "outdir=out/x".into()])
            .unwrap();
        assert_eq!(c.spectrum.k_cap, 12);
        assert_eq!(c.profile.epsilon, 10.0);
        assert_eq!(c.outdir, PathBuf::from("out/x"));
        let c = apply_overrides(r#"{"expect": "stable"}"#, &["expect=unstable".into()]).unwrap();
        assert_eq!(c.expect, Expectation::Unstable);
        assert!(apply_overrides("{}", &["similarity.betas=[1,2]".into()]).is_err());
        assert!(apply_overrides(r#"{"similarity": {"betas": [25]}}"#, &["similarity.betas=3".into()]).is_err());
        assert!(apply_overrides("{}", &["spectrum.k_cap".into()]).is_err());
        assert!(apply_overrides("{}", &["spectrum.nope=3".into()]).is_err());
    }
}
