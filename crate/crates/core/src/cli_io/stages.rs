use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::axi_fields::{AxiField, Frame, GridRZ};
use crate::error::{Error, Result};
use crate::evolution::{
    explicit_frequency, ideal_sup_rate, measure_growth, propagator_eigs, random_solenoidal, stabilizing_hyperdiffusion,
    Dynamics, EigenResult, EvolutionConfig, IdealSup, Integrator, MIN_R2,
};
use crate::nonuniqueness::{
    verify_pair, BackgroundForce, Check, Construction, ConstructionConfig, ConstructionSummary, SolutionPair,
    Trajectory, VerificationReport,
};
use crate::profiles::{check_decay, eval_profile, geometric_grid, mri_criterion, CriterionReport, DecayReport, RadialProfile};
use crate::radial_spectrum::total_negative_count;

use super::artifacts::{find_artifact, fmt, Manifest, RunDir, StageRecord};
use super::config::{Expectation, GridBlock, RunConfig};

/// Pipeline commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    ProfileCheck,
    Spectrum,
    EvolveLinear,
    EigenSs,
    Construct,
    Verify,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ProfileCheck => "profile-check",
            Command::Spectrum => "spectrum",
            Command::EvolveLinear => "evolve-linear",
            Command::EigenSs => "eigen-ss",
            Command::Construct => "construct",
            Command::Verify => "verify",
            Command::All => "all",
        }
    }

    fn stages(self) -> Vec<Command> {
        match self {
            Command::All => vec![
                Command::ProfileCheck,
                Command::Spectrum,
                Command::EvolveLinear,
                Command::EigenSs,
                Command::Construct,
                Command::Verify,
            ],
            c => vec![c],
        }
    }
}

/// Checks and files produced by one stage.
#[derive(Debug, Clone, Default)]
struct StageResult {
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

/// Result of a dispatched command.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: std::path::PathBuf,
    pub stages: Vec<(String, StageRecord)>,
    pub pass: bool,
}

/// Exit status: 0 pass, 2 numerical-acceptance failure, 1 usage error.
pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 2,
        Err(e) if is_usage(e) => 1,
        Err(_) => 2,
    }
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidGrid(_)
            | Error::InvalidProfile(_)
            | Error::FrameMismatch { .. }
            | Error::HashMismatch { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_)
    )
}

/// Runs `command` and records every stage in the manifest.
pub fn dispatch(command: Command, config: &RunConfig) -> Result<RunOutcome> {
    let errs = config.violations();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let dir = RunDir::create(config)?;
    let mut manifest = dir.manifest(config)?;
    manifest.threads = rayon::current_num_threads();
    let mut stages = Vec::new();
    let mut pass = true;
    for stage in command.stages() {
        let start = Instant::now();
        log::info!("stage {} in {}", stage.name(), dir.path.display());
        let result = match stage {
            Command::ProfileCheck => profile_check(config, &dir),
            Command::Spectrum => spectrum(config, &dir),
            Command::EvolveLinear => evolve_linear(config, &dir),
            Command::EigenSs => eigen_ss(config, &dir, &mut manifest),
            Command::Construct => construct(config, &dir, &manifest),
            Command::Verify => verify(config, &dir, &manifest),
            Command::All => unreachable!(),
        };
        let result = match result {
            Ok(r) => r,
            // a failed upstream stage leaves nothing to consume
            Err(e) if !pass && command == Command::All => {
                log::warn!("stage {} not run: {e}", stage.name());
                break;
            }
            Err(e) => return Err(e),
        };
        let record = StageRecord {
            wall_time_s: start.elapsed().as_secs_f64(),
            pass: result.checks.iter().all(|c| c.pass),
            artifacts: result.artifacts,
            checks: result.checks,
        };
        pass &= record.pass;
        manifest.stages.insert(stage.name().into(), record.clone());
        dir.write_manifest(&manifest)?;
        stages.push((stage.name().to_string(), record));
    }
    Ok(RunOutcome {
        dir: dir.path.clone(),
        stages,
        pass,
    })
}

fn flag(name: &str, ok: bool) -> Check {
    Check::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
}

fn radial_profile(config: &RunConfig) -> Result<RadialProfile> {
    let s = &config.spectrum;
    eval_profile(&config.profile, &geometric_grid(s.r_max, s.n_r, s.inner_ratio))
}

fn grid(b: &GridBlock) -> Result<Arc<GridRZ>> {
    GridRZ::new(b.n_r, b.n_z, b.r_max, b.z_topology)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDoc {
    decay: DecayReport,
    mri: CriterionReport,
    failed_conditions: Vec<String>,
}

fn profile_check(config: &RunConfig, dir: &RunDir) -> Result<StageResult> {
    let prof = radial_profile(config)?;
    let decay = check_decay(&prof)?;
    let failed: Vec<String> = decay.failed_conditions().iter().map(|s| s.to_string()).collect();
    let checks = vec![
        flag("inner decay (r -> 0)", decay.inner_ok),
        flag("outer decay (r -> inf)", decay.outer_ok),
        flag("finite energy: omega = O(r^(-1-alpha))", decay.finite_energy_ok),
    ];
    dir.write_csv(
        "profile.csv",
        &["r", "omega", "b", "d_omega2", "d_b"],
        (0..prof.len()).map(|i| vec![fmt(prof.r[i]), fmt(prof.omega[i]), fmt(prof.b[i]), fmt(prof.d_omega2[i]), fmt(prof.d_b[i])]),
    )?;
    let doc = ProfileDoc {
        decay,
        mri: mri_criterion(&prof),
        failed_conditions: failed,
    };
    dir.write_json("profile_check.json", &doc)?;
    Ok(StageResult {
        checks,
        artifacts: vec!["profile.csv".into(), "profile_check.json".into()],
    })
}

fn spectrum(config: &RunConfig, dir: &RunDir) -> Result<StageResult> {
    let s = &config.spectrum;
    let prof = radial_profile(config)?;
    let summary = total_negative_count(&prof, config.profile.epsilon, s.k_cap)?;
    let mut checks = vec![
        flag("LDLT inertia equals dense count", summary.all_consistent()),
        Check::at_most(
            "k_star",
            summary.k_star.map_or(f64::INFINITY, f64::from),
            f64::from(s.k_star_max),
        ),
    ];
    match config.expect {
        Expectation::Unstable => checks.push(Check::at_least("total negative directions", summary.total as f64, 1.0)),
        Expectation::Stable => checks.push(Check::at_most("total negative directions", summary.total as f64, 0.0)),
        Expectation::Any => {}
    }
    dir.write_csv(
        "spectrum.csv",
        &["k", "n_neg", "lambda_min", "n_dof", "dense_n_neg"],
        summary.per_k.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.n_neg.to_string(),
                fmt(r.lambda_min()),
                r.resolution.to_string(),
                r.dense_n_neg.map(|d| d.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    dir.write_json(
        "spectrum.json",
        &serde_json::json!({
            "total": summary.total,
            "k_star": summary.k_star,
            "epsilon": summary.epsilon,
            "n_dof": summary.n_dof,
            "consistent": summary.all_consistent(),
            "per_k": summary.per_k,
        }),
    )?;
    Ok(StageResult {
        checks,
        artifacts: vec!["spectrum.csv".into(), "spectrum.json".into()],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GrowthDoc {
    rate: f64,
    r2: f64,
    window: [f64; 2],
    dt: f64,
    hyperdiffusion: f64,
    grid_tolerance: f64,
    eigen: Option<EigenResult>,
}

fn evolve_linear(config: &RunConfig, dir: &RunDir) -> Result<StageResult> {
    let e = &config.evolution;
    let spec = &config.profile;
    let eps = spec.epsilon;
    let g = grid(&e.grid)?;
    let ev = spec.evaluator()?;
    let dt = e
        .dt
        .unwrap_or_else(|| e.cfl / explicit_frequency(&g, &ev, &EvolutionConfig::ideal(1.0, e.t_end, eps)));
    let dt = e.t_end / (e.t_end / dt).ceil();
    let b_max = g.r_c.iter().map(|&r| ev.at(r).b.abs()).fold(0.0, f64::max);
    let cfg = EvolutionConfig {
        hyperdiffusion: e.hyperdiffusion_factor * stabilizing_hyperdiffusion(dt, eps * b_max),
        ..EvolutionConfig::ideal(dt, e.t_end, eps)
    };
    let hyperdiffusion = cfg.hyperdiffusion;
    let integ = Integrator::new(Dynamics::linear(&g, spec, cfg)?)?;
    let x0 = random_solenoidal(&g, Frame::Physical, config.seed)?;
    let fit = measure_growth(&x0, &integ, e.fit_window)?;
    let tol = integ.dynamics.grid_tolerance();
    let mut checks = Vec::new();
    match config.expect {
        Expectation::Unstable => {
            checks.push(Check::at_least("growth rate", fit.rate, f64::MIN_POSITIVE));
            checks.push(Check::at_least("growth fit r2", fit.r2, MIN_R2));
        }
        Expectation::Stable => checks.push(Check::at_most("growth rate", fit.rate, 2.0 * tol)),
        Expectation::Any => {}
    }
    let eigen = if e.cross_check {
        let eig = propagator_eigs(&integ, &x0, &e.arnoldi)?;
        let lead = eig.leading();
        checks.push(Check::at_most(
            "Arnoldi vs evolution relative gap",
            (fit.rate - lead.re).abs() / lead.re.abs(),
            e.agreement_tol,
        ));
        checks.push(Check::at_most("leading |Im| / Re", lead.im.abs() / lead.re, e.real_tol));
        Some(eig)
    } else {
        None
    };
    dir.write_csv(
        "time_series.csv",
        &["t", "l2_velocity", "l2_magnetic", "div_residual"],
        fit.mode_norm_history
            .iter()
            .map(|s| vec![fmt(s.t), fmt(s.l2_velocity), fmt(s.l2_magnetic), fmt(s.div_residual)]),
    )?;
    dir.write_json(
        "growth.json",
        &GrowthDoc {
            rate: fit.rate,
            r2: fit.r2,
            window: fit.window,
            dt,
            hyperdiffusion,
            grid_tolerance: tol,
            eigen,
        },
    )?;
    Ok(StageResult {
        checks,
        artifacts: vec!["time_series.csv".into(), "growth.json".into()],
    })
}

/// Linear similarity dynamics about `βΞ₀` at the configured CFL number.
pub fn similarity_dynamics(config: &RunConfig, beta: f64) -> Result<Dynamics> {
    let m = &config.similarity;
    let spec = config.similarity_profile();
    let g = grid(&m.grid)?;
    let probe = EvolutionConfig::similarity(1.0, 1.0, m.epsilon, beta);
    let dt = m.cfl / explicit_frequency(&g, &spec.evaluator()?, &probe);
    Dynamics::linear(&g, &spec, EvolutionConfig::similarity(dt, 1.0, m.epsilon, beta))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BetaMode {
    beta: f64,
    /// leading eigenvalue, absent when Arnoldi did not converge
    re: Option<f64>,
    im: Option<f64>,
    residual: f64,
    /// `λ̃/β`
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Selected {
    beta: f64,
    a: f64,
    im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EigenDoc {
    lambda0: IdealSup,
    modes: Vec<BetaMode>,
    selected: Option<Selected>,
    heat_rate: f64,
}

fn eigen_ss(config: &RunConfig, dir: &RunDir, manifest: &mut Manifest) -> Result<StageResult> {
    let m = &config.similarity;
    let spec = config.similarity_profile();
    let g = grid(&m.grid)?;
    let x0 = random_solenoidal(&g, Frame::Similarity, config.seed)?;
    let mut modes = Vec::new();
    let mut selected: Option<(Selected, AxiField)> = None;
    for &beta in &m.betas {
        let integ = Integrator::new(similarity_dynamics(config, beta)?)?;
        let (mode, field) = match propagator_eigs(&integ, &x0, &m.arnoldi) {
            Ok(eig) => {
                let l = eig.leading().clone();
                let mode = BetaMode {
                    beta,
                    re: Some(l.re),
                    im: Some(l.im),
                    residual: l.residual,
                    ratio: Some(l.re / beta),
                };
                (mode, l.mode)
            }
            Err(Error::ArnoldiNotConverged { residual, .. }) => (
                BetaMode {
                    beta,
                    re: None,
                    im: None,
                    residual,
                    ratio: None,
                },
                None,
            ),
            Err(e) => return Err(e),
        };
        log::info!("beta = {beta}: leading eigenvalue {:?} {:?}i", mode.re, mode.im);
        if let (None, Some(re), Some(im), Some(f)) = (&selected, mode.re, mode.im, field) {
            if re > 0.0 && im.abs() <= m.real_tol * re {
                selected = Some((Selected { beta, a: re, im }, f));
            }
        }
        modes.push(mode);
    }
    let lambda0 = ideal_sup_rate(&spec, m.epsilon, m.ideal.n, m.ideal.r_max, m.ideal.k_lo, m.ideal.k_hi)?;

    let heat = {
        let probe = EvolutionConfig::similarity(1.0, m.heat_t_end, m.epsilon, 0.0);
        let dt = m.cfl / explicit_frequency(&g, &spec.evaluator()?, &probe);
        let dt = m.heat_t_end / (m.heat_t_end / dt).ceil();
        let integ = Integrator::new(Dynamics::linear(&g, &spec, EvolutionConfig::similarity(dt, m.heat_t_end, m.epsilon, 0.0))?)?;
        measure_growth(&x0, &integ, m.heat_window)?.rate
    };

    let mut checks = Vec::new();
    for mode in &modes {
        let name = format!("leading eigenvalue at beta = {}", mode.beta);
        checks.push(Check::at_least(&name, mode.re.unwrap_or(f64::NEG_INFINITY), f64::MIN_POSITIVE));
    }
    for w in modes.windows(2) {
        let gap = |m: &BetaMode| m.ratio.map_or(f64::INFINITY, |r| (r - lambda0.rate).abs());
        let (d0, d1) = (gap(&w[0]), gap(&w[1]));
        checks.push(Check {
            name: format!("|rate/beta - Lambda0| shrinks from beta = {} to {}", w[0].beta, w[1].beta),
            value: d1 / d0,
            tolerance: 1.0,
            pass: d1 < d0,
        });
    }
    match &selected {
        Some((s, _)) => checks.push(Check::at_most("selected mode |Im| / Re", s.im.abs() / s.a, m.real_tol)),
        None => checks.push(flag("real unstable mode found", false)),
    }
    checks.push(Check::at_most("growth rate at beta = 0", heat, -0.25 + m.heat_margin));

    let mut artifacts = vec!["eigen_ss.json".to_string()];
    if let Some((s, eta)) = &selected {
        dir.write_snapshot("eta.bin", eta, 0.0)?;
        artifacts.push("eta.bin".into());
        manifest.beta = Some(s.beta);
        manifest.a = Some(s.a);
    }
    dir.write_json(
        "eigen_ss.json",
        &EigenDoc {
            lambda0,
            modes,
            selected: selected.map(|(s, _)| s),
            heat_rate: heat,
        },
    )?;
    Ok(StageResult { checks, artifacts })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryRef {
    tau0: f64,
    dtau: f64,
    files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstructionDoc {
    summary: ConstructionSummary,
    /// `2a`, the bootstrap target of the decay exponent
    bootstrap_target: f64,
    reconstruction_gap: f64,
    trajectory: TrajectoryRef,
}

fn construct(config: &RunConfig, dir: &RunDir, manifest: &Manifest) -> Result<StageResult> {
    let eig: EigenDoc = dir.read_json(find_artifact(manifest, "eigen-ss", "eigen_ss.json")?)?;
    let sel = eig
        .selected
        .ok_or_else(|| Error::InvalidArgument("eigen-ss found no real unstable mode".into()))?;
    let (eta, _) = dir.read_snapshot(find_artifact(manifest, "eigen-ss", "eta.bin")?)?;
    let b = &config.construction;
    let cc = ConstructionConfig {
        amplitude: b.amplitude,
        sobolev_order: b.sobolev_order,
        epsilon0: b.epsilon0,
        picard_tol: b.picard_tol,
        max_picard: b.max_picard,
        max_halvings: b.max_halvings,
        max_ratio: b.max_ratio,
        max_stored: b.max_stored,
        ..ConstructionConfig::new(sel.beta, sel.a, b.tau_end - b.span_efoldings / sel.a, b.tau_end)
    };
    let c = Construction::new(similarity_dynamics(config, sel.beta)?, eta, cc)?;
    let fp = c.fixed_point()?;
    let summary = fp.summary();
    let direct = fp.construction.direct_unstable_trajectory()?;
    let gap = fp.construction.reconstruction_gap(&direct, &fp.perturbation)?;
    let checks = vec![
        Check::at_most("max Picard ratio", summary.max_ratio, b.max_ratio),
        Check::at_least("decay exponent of Xi_per", summary.decay_slope, summary.a + summary.epsilon0),
        flag("Xi_per below Xi_lim", summary.hierarchy_holds),
        Check::at_most("Duhamel vs direct gap", gap, b.gap_tol),
    ];
    let total = fp.total_perturbation()?;
    let files: Vec<String> = (0..total.len()).map(|k| format!("trajectory/x_{k:05}.bin")).collect();
    for ((name, x), tau) in files.iter().zip(&total.states).zip(total.taus()) {
        dir.write_snapshot(name, x, tau)?;
    }
    let n = b.sobolev_order;
    dir.write_csv(
        "perturbation_norms.csv",
        &["tau", "l2", "h_n"],
        fp.perturbation.norm_history(n).iter().map(|s| vec![fmt(s.tau), fmt(s.l2), fmt(s.h_n)]),
    )?;
    let doc = ConstructionDoc {
        bootstrap_target: 2.0 * summary.a,
        summary,
        reconstruction_gap: gap,
        trajectory: TrajectoryRef {
            tau0: total.tau0,
            dtau: total.dtau,
            files: files.clone(),
        },
    };
    dir.write_json("construction.json", &doc)?;
    let mut artifacts = vec!["construction.json".to_string(), "perturbation_norms.csv".into()];
    artifacts.extend(files);
    Ok(StageResult { checks, artifacts })
}

fn verify(config: &RunConfig, dir: &RunDir, manifest: &Manifest) -> Result<StageResult> {
    let doc: ConstructionDoc = dir.read_json(find_artifact(manifest, "construct", "construction.json")?)?;
    let states = doc
        .trajectory
        .files
        .iter()
        .map(|f| dir.read_snapshot(f).map(|(x, _)| x))
        .collect::<Result<Vec<_>>>()?;
    let traj = Trajectory::new(doc.trajectory.tau0, doc.trajectory.dtau, states)?;
    let (beta, a) = (doc.summary.beta, doc.summary.a);
    let force = Arc::new(BackgroundForce::new(&config.similarity_profile(), beta)?);
    let pair = SolutionPair::new(force, traj, a)?;
    let v = &config.verify;
    let report: VerificationReport = verify_pair(&pair, v.window_efoldings / a, &v.options)?;
    dir.write_csv(
        "separation.csv",
        &["t", "background_velocity", "second_velocity", "separation", "separation_magnetic"],
        pair.norm_history().iter().map(|n| {
            vec![
                fmt(n.t),
                fmt(n.background_velocity),
                fmt(n.second_velocity),
                fmt(n.separation),
                fmt(n.separation_magnetic),
            ]
        }),
    )?;
    dir.write_json("verification.json", &report)?;
    Ok(StageResult {
        checks: report.checks.clone(),
        artifacts: vec!["verification.json".into(), "separation.csv".into()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_io::parse_config;

    fn config(tmp: &tempfile::TempDir, text: &str) -> RunConfig {
        let mut c = parse_config(text).unwrap();
        c.outdir = tmp.path().to_path_buf();
        c
    }

    const SMALL: &str = r#"{"spectrum": {"n_r": 256}, "expect": "unstable"}"#;

    #[test]
    fn spectrum_writes_hashed_csv_and_total() {
        let tmp = tempfile::tempdir().unwrap();
        let c = config(&tmp, SMALL);
        let out = dispatch(Command::Spectrum, &c).unwrap();
        assert!(out.pass, "{:?}", out.stages);
        assert_eq!(exit_code(&Ok(out.clone())), 0);
        let csv = std::fs::read_to_string(out.dir.join("spectrum.csv")).unwrap();
        assert!(csv.starts_with("k,n_neg,lambda_min,n_dof,dense_n_neg,config_hash\n"));
        assert!(csv.lines().skip(1).all(|l| l.ends_with(&c.hash())));
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.dir.join("spectrum.json")).unwrap()).unwrap();
        assert!(doc["total"].as_u64().unwrap() >= 1);
        assert_eq!(doc["config_hash"], c.hash());
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(out.dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.config_hash, c.hash());
        assert!(m.stages["spectrum"].pass);
    }

    #[test]
    fn artifacts_are_bit_identical_across_runs() {
        let (t1, t2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = dispatch(Command::Spectrum, &config(&t1, SMALL)).unwrap();
        let b = dispatch(Command::Spectrum, &config(&t2, SMALL)).unwrap();
        for f in ["spectrum.csv", "spectrum.json"] {
            assert_eq!(std::fs::read(a.dir.join(f)).unwrap(), std::fs::read(b.dir.join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn slow_profile_fails_profile_check_with_named_condition() {
        // ω = (1+r²)^{-1/4} decays too slowly for finite energy
        let tmp = tempfile::tempdir().unwrap();
        let c = config(
            &tmp,
            r#"{"profile": {"kind": "rational-decay", "parameters": [1, 0.25, 1, 0, 1], "epsilon": 0.05}}"#,
        );
        let out = dispatch(Command::ProfileCheck, &c);
        assert_eq!(exit_code(&out), 2);
        let out = out.unwrap();
        let failed: Vec<&str> = out.stages[0].1.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert!(!failed.is_empty());
        let doc: ProfileDoc = RunDir::create(&c).unwrap().read_json("profile_check.json").unwrap();
        assert_eq!(doc.failed_conditions.len(), failed.len());
        assert_eq!(dispatch(Command::ProfileCheck, &config(&tmp, "{}")).map(|o| o.pass).ok(), Some(true));
    }

    #[test]
    fn downstream_stage_without_upstream_is_a_usage_error() {
        let tmp = tempfile::tempdir().unwrap();
        let r = dispatch(Command::Construct, &config(&tmp, "{}"));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        assert_eq!(exit_code(&r), 1);
        assert_eq!(exit_code(&Err(Error::Config(vec![]))), 1);
        assert_eq!(exit_code(&Err(Error::FixedPointFailed("x".into()))), 2);
    }

    #[test]
    fn verify_refuses_foreign_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let c = config(&tmp, "{}");
        let dir = RunDir::create(&c).unwrap();
        let mut m = dir.manifest(&c).unwrap();
        m.stages.insert(
            "construct".into(),
            StageRecord {
                wall_time_s: 0.0,
                pass: true,
                artifacts: vec!["construction.json".into()],
                checks: vec![],
            },
        );
        dir.write_manifest(&m).unwrap();
        let foreign = RunDir {
            path: dir.path.clone(),
            hash: "ab".repeat(32),
        };
        foreign.write_json("construction.json", &serde_json::json!({})).unwrap();
        let r = dispatch(Command::Verify, &c);
        assert!(matches!(r, Err(Error::HashMismatch { .. })), "{r:?}");
        assert_eq!(exit_code(&r), 1);
    }
}
