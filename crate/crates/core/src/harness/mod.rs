//! Configuration, calibration manifests, experiment runners and report
//! persistence shared by the command-line front end.

pub mod calibrate;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod manifest;
pub mod report;
pub mod selftest;

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
pub use config::{Experiment, Overrides, RunConfig};
pub use experiments::{run, Artifact, Check};
pub use manifest::CalibrationManifest;

/// The JSON written next to the CSV files of every run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub calibration_hash: Option<String>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub files: Vec<String>,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub summary: Value,
    /// Wall-clock seconds, only with record_timings.
    pub elapsed_s: Option<f64>,
}

/// Loads the manifest named by the config, with its hash.
pub fn load_calibration(cfg: &RunConfig) -> Result<Option<(CalibrationManifest, String)>> {
    cfg.calibration
        .as_ref()
        .map(|p| CalibrationManifest::load(&cfg.resolve_path(p)))
        .transpose()
}

/// Writes every table as `<name>.csv`, plot data, the fitted manifest if any,
/// and `<experiment>.json`. Returns the run manifest.
pub fn write_artifact(
    exp: Experiment,
    cfg: &RunConfig,
    calibration_hash: Option<String>,
    art: &Artifact,
    elapsed_s: f64,
    dir: &Path,
) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &art.tables {
        let name = format!("{}.csv", t.name);
        std::fs::write(dir.join(&name), t.to_csv())?;
        files.push(name);
    }
    for (name, text) in &art.files {
        std::fs::write(dir.join(name), text)?;
        files.push(name.clone());
    }
    if let Some(m) = &art.manifest {
        std::fs::write(dir.join("calibration.json"), m.to_json())?;
        files.push("calibration.json".into());
    }
    let run = RunManifest {
        experiment: exp.name().into(),
        config_hash: cfg.hash(),
        calibration_hash,
        seed: cfg.seed,
        workers: cfg.workers,
        files,
        passed: art.passed(),
        checks: art.checks.clone(),
        summary: art.summary.clone(),
        elapsed_s: cfg.record_timings.then_some(elapsed_s),
    };
    let mut json = serde_json::to_string_pretty(&run)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{}.json", exp.name())), json)?;
    Ok(run)
}
