//! Batch runner for `hrlab` experiments: one configuration file in, a
//! directory of CSV, column, binary and JSON artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use hrlab::HrError;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use output::OutDir;

/// Directory used when neither `--out` nor `[output] dir` is given.
pub const DEFAULT_OUT_DIR: &str = "hrlab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Constants,
    Verify,
    Pullback,
    OracleCompare,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Simulate,
        Command::Constants,
        Command::Verify,
        Command::Pullback,
        Command::OracleCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Constants => "constants",
            Command::Verify => "verify",
            Command::Pullback => "pullback",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] HrError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for numerical faults, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

/// What one invocation asks for.
#[derive(Debug, Clone)]
pub struct Options {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed_override: Option<u64>,
    pub strict: bool,
}

/// Result of a successful invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Monitor violations found; only `verify` reports any.
    pub violations: usize,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self, strict: bool) -> i32 {
        if strict && self.violations > 0 {
            3
        } else {
            0
        }
    }
}

pub fn run(opts: &Options) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(&opts.config).map_err(|e| CliError::io(&opts.config, e))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = opts.seed_override {
        cfg.override_seed(seed);
    }
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match opts.threads {
        Some(0) => Err(CliError::Invalid("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
            pool.install(|| run_config(opts.command, &cfg, &dir))
        }
        None => run_config(opts.command, &cfg, &dir),
    }
}

/// Runs `command` on an already parsed configuration, writing into `dir`.
pub fn run_config(command: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome, CliError> {
    let mut out = OutDir::create(dir)?;
    let (violations, summary) = match command {
        Command::Simulate => commands::simulate::run(cfg, &mut out)?,
        Command::Constants => commands::constants::run(cfg, &mut out)?,
        Command::Verify => commands::verify::run(cfg, &mut out)?,
        Command::Pullback => commands::pullback::run(cfg, &mut out)?,
        Command::OracleCompare => commands::oracle::run(cfg, &mut out)?,
    };
    let files = out.finish(cfg, command)?;
    Ok(Outcome {
        files,
        violations,
        summary,
    })
}
