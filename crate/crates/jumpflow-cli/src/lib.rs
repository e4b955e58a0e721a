//! Config-driven runner for the `jumpflow` experiments.
//!
//! One TOML file describes one experiment (system, noise, simulation and a
//! task). [`run`] validates everything up front, executes the task on a
//! worker pool of the requested size and writes a CSV table, a JSON sidecar
//! and a run manifest. Outputs depend only on the config, never on the
//! number of threads.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod output;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use thiserror::Error;

pub use config::ExperimentConfig;
use output::OutputDir;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "JUMPFLOW_OUT";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerics failure: {0}")]
    Numerics(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<jumpflow::Error> for CliError {
    fn from(e: jumpflow::Error) -> Self {
        match e {
            jumpflow::Error::Config(m) => CliError::Validation(m),
            other => CliError::Numerics(other.to_string()),
        }
    }
}

/// Options of one invocation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    /// `--out`; wins over the environment and the config.
    pub out: Option<PathBuf>,
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub summary: serde_json::Value,
}

fn output_root(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    if let Some(p) = &opts.out {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    PathBuf::from(cfg.output.clone().unwrap_or_else(|| "out".into()))
}

/// Parses, validates and runs the experiment in `path`.
pub fn run(path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    run_config(&cfg, opts)
}

pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let threads = match opts.threads {
        Some(0) => return Err(CliError::Validation("--threads: must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let out = OutputDir::create(output_root(cfg, opts))?;
    let hash = cfg.hash();
    let body = pool.install(|| tasks::execute(cfg, &out))?;
    let name = cfg.task.name();
    let mut sidecar = json!({
        "task": name,
        "config_hash": hash,
        "seed": cfg.sim.seed,
        "n_paths": cfg.sim.n_paths,
    });
    if let (Some(s), Some(b)) = (sidecar.as_object_mut(), body.as_object()) {
        for (k, v) in b {
            s.insert(k.clone(), v.clone());
        }
    }
    out.write_json(&format!("{name}.json"), &sidecar)?;
    out.write_text("config.toml", &cfg.to_toml())?;
    let manifest = json!({
        "config_hash": hash,
        "seed": cfg.sim.seed,
        "task": name,
        "threads": threads,
        "versions": {"jumpflow": jumpflow::VERSION, "jumpflow-cli": env!("CARGO_PKG_VERSION")},
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    out.write_json("manifest.json", &manifest)?;
    Ok(RunReport { out_dir: out.root, config_hash: hash, summary: sidecar })
}
