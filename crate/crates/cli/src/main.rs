//! `dioph` command-line harness.
//!
//! Exit codes: 0 success, 1 assertion failure or runtime error, 2 config
//! error. Settings resolve as flag > environment (DIOPH_*) > config file.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dioph::harness::{load_calibration, run, write_artifact, Experiment, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dioph", version, about = "Experiments on rational points near nondegenerate manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Flags {
    /// Flat key = value config file.
    #[arg(long, env = "DIOPH_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "DIOPH_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "DIOPH_WORKERS")]
    workers: Option<usize>,
    /// Evaluation budget (candidates, grid points or q values).
    #[arg(long, env = "DIOPH_BUDGET")]
    budget: Option<u64>,
    /// Output directory.
    #[arg(long, env = "DIOPH_OUT")]
    out: Option<PathBuf>,
    /// Calibration manifest JSON.
    #[arg(long, env = "DIOPH_CALIBRATION")]
    calibration: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Count rational points near the manifold over a t sweep.
    CountSweep(Flags),
    /// Measure the quantitative nondivergence sets.
    QndMeasure(Flags),
    /// Split counts into generic and special parts.
    GenericSplit(Flags),
    /// Cover fraction of the lower-bound balls and the 𝔊 survey.
    LowerBound(Flags),
    /// Monte-Carlo approximability experiment.
    KhintchineMc(Flags),
    /// Histogram of windowed exponent estimates.
    ExponentSpectrum(Flags),
    /// Lattice identities and Minkowski bounds.
    LatticeSelftest(Flags),
    /// Fit and freeze a calibration manifest.
    Calibrate(Flags),
    /// Merge CSV outputs into a summary.
    ReportRender(Flags),
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Command::CountSweep(f) => (Experiment::CountSweep, f),
            Command::QndMeasure(f) => (Experiment::QndMeasure, f),
            Command::GenericSplit(f) => (Experiment::GenericSplit, f),
            Command::LowerBound(f) => (Experiment::LowerBound, f),
            Command::KhintchineMc(f) => (Experiment::KhintchineMc, f),
            Command::ExponentSpectrum(f) => (Experiment::ExponentSpectrum, f),
            Command::LatticeSelftest(f) => (Experiment::LatticeSelftest, f),
            Command::Calibrate(f) => (Experiment::Calibrate, f),
            Command::ReportRender(f) => (Experiment::ReportRender, f),
        }
    }
}

/// Marks errors caused by the configuration (exit code 2).
#[derive(Debug)]
struct ConfigError;

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("configuration error")
    }
}

impl std::error::Error for ConfigError {}

fn load(exp: Experiment, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: flags.seed,
        workers: flags.workers,
        budget: flags.budget,
        out: flags.out.clone(),
        calibration: flags.calibration.clone(),
    });
    // flag paths are relative to the working directory, file paths to the file
    if let Some(p) = &flags.calibration {
        cfg.calibration = Some(std::path::absolute(p)?);
    }
    cfg.validate(exp)?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<bool> {
    let (exp, flags) = command.split();
    let cfg = load(exp, &flags).context(ConfigError)?;
    let calibration = load_calibration(&cfg).context(ConfigError)?;
    let (manifest, hash) = match calibration {
        Some((m, h)) => (Some(m), Some(h)),
        None => (None, None),
    };
    let start = Instant::now();
    let art = run(exp, &cfg, manifest).with_context(|| format!("{} failed", exp.name()))?;
    let out = match &flags.out {
        Some(p) => p.clone(),
        None => cfg.resolve_path(&cfg.out),
    };
    let rm = write_artifact(exp, &cfg, hash, &art, start.elapsed().as_secs_f64(), &out)
        .with_context(|| format!("writing to {}", out.display()))?;
    for c in &rm.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} files to {}", rm.files.len() + 1, out.display());
    Ok(rm.passed)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.chain().find_map(|c| c.downcast_ref::<dioph::Error>()) {
        Some(
            dioph::Error::InvalidParameter(_)
            | dioph::Error::InvalidDimension(_)
            | dioph::Error::Precondition(_)
            | dioph::Error::Parse { .. }
            | dioph::Error::Schema(_)
            | dioph::Error::BudgetExceeded { .. },
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
