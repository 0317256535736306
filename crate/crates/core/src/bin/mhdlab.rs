use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mhdlab::cli_io::{apply_overrides, dispatch, exit_code, Command};

/// Magneto-rotational instability and forced Leray-solution toolkit.
#[derive(Debug, Parser)]
#[command(name = "mhdlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// scalar override, e.g. `--set spectrum.k_cap=40`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Ok(n) = std::env::var("MHDLAB_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            _ => {
                eprintln!("error: MHDLAB_THREADS = {n:?} must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let result = apply_overrides(&text, &cli.set).and_then(|config| dispatch(cli.command, &config));
    match &result {
        Ok(out) => {
            for (stage, record) in &out.stages {
                for c in &record.checks {
                    let tag = if c.pass { "PASS" } else { "FAIL" };
                    println!("{tag} {stage}: {} = {:.6e} (tolerance {:.3e})", c.name, c.value, c.tolerance);
                }
                println!("{stage}: {} in {:.2} s", if record.pass { "pass" } else { "fail" }, record.wall_time_s);
            }
            println!("artifacts in {}", out.dir.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
