//! Config-driven front end to `tipshoot-core`.
//!
//! Each subcommand reads a TOML [`config::RunConfig`], writes its results to
//! an output directory and maps the outcome to an [`ExitStatus`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;
pub mod verify;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tipshoot_core::bats::BatsError;
use tipshoot_core::classify::ClassifyError;
use tipshoot_core::shape::ShapeError;
use tipshoot_core::toy::ToyError;

pub use config::{Command, Format, LoadedConfig, RunConfig};
pub use output::ResultRecord;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Bats(#[from] BatsError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Clean,
    Undetermined,
    Failed,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Clean => 0,
            ExitStatus::Failed => 1,
            ExitStatus::Undetermined => 2,
        }
    }
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing<'a> {
    command: &'a str,
    config_hash: &'a str,
    jobs: usize,
    wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub toolkit_version: String,
    pub config_hash: String,
    pub model: config::Model,
    pub passed: bool,
    pub suite: verify::Suite,
}

/// Runs `cmd` with the loaded config. Wall-clock time goes to
/// `timing.json`, apart from the deterministic result files.
pub fn run(cmd: Command, loaded: &LoadedConfig, ov: &Overrides) -> Result<ExitStatus, CliError> {
    let cfg = &loaded.config;
    cfg.validate_for(cmd)?;
    let out_dir = ov
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("tipshoot-out"));
    let format = ov.format.or(cfg.format).unwrap_or(Format::Both);
    let jobs = ov
        .jobs
        .or(cfg.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::ConfigInvalid("jobs must be at least 1".into()));
    }
    output::ensure_dir(&out_dir)?;
    let ctx = output::Ctx {
        hash: loaded.hash.clone(),
        command: cmd,
        model: cfg.model,
        out_dir,
    };
    log::info!(
        "{} ({:?}) with {jobs} workers, config {}",
        cmd.name(),
        cfg.model,
        &ctx.hash[..12]
    );
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let start = Instant::now();
    let status = pool.install(|| match cmd {
        Command::Classify => commands::classify(cfg, &ctx, format),
        Command::Bisect => commands::bisect(cfg, &ctx, format),
        Command::Sweep => commands::sweep(cfg, &ctx, format),
        Command::Profile => commands::profile(cfg, &ctx, format),
        Command::Verify => run_verify(cfg, &ctx),
    })?;
    ctx.write_json(
        "timing.json",
        &Timing {
            command: cmd.name(),
            config_hash: &ctx.hash,
            jobs,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(status)
}

fn run_verify(cfg: &RunConfig, ctx: &output::Ctx) -> Result<ExitStatus, CliError> {
    let sec = cfg.verify.clone().unwrap_or_default();
    verify::validate(&sec)?;
    let suite = match cfg.model {
        config::Model::Toy => verify::toy_suite(cfg.g()?, &sec, &cfg.tolerances),
        config::Model::Bats => verify::bats_suite(cfg.mu()?, &sec, &cfg.tolerances),
    };
    for c in &suite.checks {
        log::info!(
            "{} {}: {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let report = VerifyReport {
        toolkit_version: output::TOOLKIT_VERSION.to_string(),
        config_hash: ctx.hash.clone(),
        model: cfg.model,
        passed: suite.passed(),
        suite,
    };
    ctx.write_json("report.json", &report)?;
    Ok(if report.passed {
        ExitStatus::Clean
    } else {
        ExitStatus::Failed
    })
}
