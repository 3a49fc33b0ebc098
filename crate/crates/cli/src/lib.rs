//! Batch runner for the scattering experiments: reads a `key = value`
//! config, runs the solvers and writes CSV tables plus a manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

/// Files written by a successful run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
}

/// Runs the experiment described by `config`. Nothing is written unless the
/// config is valid and every solve succeeds.
pub fn run(config: &Path, overrides: &Overrides) -> CliResult<RunSummary> {
    let cfg = config::load(config, overrides)?;
    run_config(&cfg)
}

pub fn run_config(cfg: &ExperimentConfig) -> CliResult<RunSummary> {
    let t0 = Instant::now();
    let outcome = experiments::run(cfg)?;
    let mut timings = outcome.timings;
    timings.push(("total_s".into(), t0.elapsed().as_secs_f64()));
    fs::create_dir_all(&cfg.out_dir)?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        t.write(&cfg.out_dir)?;
        outputs.push(t.name.clone());
    }
    fs::write(cfg.out_dir.join("resolved.cfg"), output::resolved_config(&cfg.resolved))?;
    outputs.push("resolved.cfg".into());
    outputs.push("manifest.txt".into());
    fs::write(cfg.out_dir.join("manifest.txt"), output::manifest(&cfg.resolved, &timings, &outputs))?;
    Ok(RunSummary { out_dir: cfg.out_dir.clone(), outputs })
}
