//! `harnesslab`: command-line front end for the harness simulation toolkit.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 rejected configuration (an
//! error JSON is printed on stdout), 3 a failed check under `--assert`.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use harnesslab::fluct::FluctConfig;
use harnesslab::HarnessError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use commands::Outcome;
use config::{HydroConfig, InvariantConfig, LimitsConfig, ScalingConfig, Seeded, SimulateConfig, ValidateConfig};
use output::Staging;

const LONG_ABOUT: &str = "Exact numerics and Monte Carlo experiments for the harness interface model.

Fluctuation runs cost about R * T * (window width) site updates, where the
window spans roughly |b| n t + |r| sqrt(n) + M n t sites for range M. At
n = 10^4 and R = 2000 that is of order 10^11 updates; plan for minutes per core.";

#[derive(Parser)]
#[command(name = "harnesslab", version, about = "Harness interface experiments", long_about = LONG_ABOUT)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's own seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 3 when any acceptance check fails.
    #[arg(long = "assert")]
    assert_checks: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check a jump kernel and report its moments and symmetrization.
    Validate(Common),
    /// Evolve heights on a box and write them out.
    Simulate(Common),
    /// Stationary increment covariance by both analytic routes and Monte Carlo.
    Invariant(Common),
    /// Covariance of the scaled fluctuation field against the Gaussian limit.
    Fluct(Common),
    /// Hydrodynamic limit error for a macroscopic profile.
    Hydro(Common),
    /// Variance growth exponent from a flat start.
    Scaling(Common),
    /// Tables of the limit covariance kernels.
    Limits(Common),
}

enum Failure {
    Rejected(serde_json::Value),
    Runtime(anyhow::Error),
}

fn classify(err: anyhow::Error) -> Failure {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        let reason = match h {
            HarnessError::RejectedKernel { reason, .. } => Some(reason.as_str()),
            _ => None,
        };
        match h {
            HarnessError::WindowTooSmall(_) => Failure::Runtime(err),
            _ => Failure::Rejected(json!({"error": h.kind(), "reason": reason, "message": h.to_string()})),
        }
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        Failure::Rejected(json!({"error": "invalid-config", "reason": null, "message": format!("{err:#}")}))
    } else {
        Failure::Runtime(err)
    }
}

fn load<T: DeserializeOwned>(path: Option<&Path>) -> anyhow::Result<T> {
    let path = path.context("--config is required for this subcommand")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn seeded<T: DeserializeOwned + Seeded>(common: &Common) -> anyhow::Result<T> {
    let mut cfg: T = load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn execute<T: Serialize + Sync>(
    name: &str,
    common: &Common,
    cfg: T,
    body: impl FnOnce(&T, &mut Staging) -> commands::CmdResult + Send,
) -> Result<Outcome, Failure> {
    let threads = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Failure::Runtime(e.into()))?;
    let mut staging = Staging::new(&common.out).map_err(Failure::Runtime)?;
    let start = Instant::now();
    let outcome = pool.install(|| body(&cfg, &mut staging)).map_err(classify)?;
    let elapsed = start.elapsed().as_secs_f64();
    let checks: Vec<_> = outcome
        .checks
        .iter()
        .map(|c| json!({"name": c.name, "pass": c.pass}))
        .collect();
    let meta = json!({
        "tool": "harnesslab",
        "version": concat!("v", env!("CARGO_PKG_VERSION")),
        "subcommand": name,
        "seed": serde_json::to_value(&cfg).ok().and_then(|v| v.get("seed").cloned()),
        "threads": threads,
        "config": &cfg,
        "checks": checks,
        "summary": outcome.summary,
        "timings": {"compute_seconds": elapsed},
    });
    staging
        .json("config.json", &cfg)
        .and_then(|_| staging.json("meta.json", &meta))
        .map_err(Failure::Runtime)?;
    staging.commit().map_err(Failure::Runtime)?;
    Ok(outcome)
}

fn dispatch(cli: &Cli) -> Result<(Outcome, bool), Failure> {
    let (outcome, common) = match &cli.command {
        Command::Validate(c) => {
            let cfg: ValidateConfig = load(c.config.as_deref()).map_err(classify)?;
            (execute("validate", c, cfg, commands::validate)?, c)
        }
        Command::Simulate(c) => {
            let cfg: SimulateConfig = seeded(c).map_err(classify)?;
            (execute("simulate", c, cfg, commands::simulate)?, c)
        }
        Command::Invariant(c) => {
            let cfg: InvariantConfig = seeded(c).map_err(classify)?;
            (execute("invariant", c, cfg, commands::invariant)?, c)
        }
        Command::Fluct(c) => {
            let cfg: FluctConfig = seeded(c).map_err(classify)?;
            (execute("fluct", c, cfg, commands::fluct)?, c)
        }
        Command::Hydro(c) => {
            let cfg: HydroConfig = seeded(c).map_err(classify)?;
            (execute("hydro", c, cfg, commands::hydro)?, c)
        }
        Command::Scaling(c) => {
            let cfg: ScalingConfig = seeded(c).map_err(classify)?;
            (execute("scaling", c, cfg, commands::scaling)?, c)
        }
        Command::Limits(c) => {
            let cfg: LimitsConfig = match &c.config {
                Some(p) => load(Some(p)).map_err(classify)?,
                None => LimitsConfig::default(),
            };
            (execute("limits", c, cfg, commands::limits)?, c)
        }
    };
    Ok((outcome, common.assert_checks))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok((outcome, assert_checks)) => {
            let mut failed = false;
            for c in &outcome.checks {
                eprintln!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
                failed |= !c.pass;
            }
            if assert_checks && failed {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Rejected(v)) => {
            println!("{v}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
