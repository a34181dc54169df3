//! Batch front-end for the sparse-tree laboratory: configuration, sweeps, reports.

pub mod cache;
pub mod config;
pub mod dynamics;
pub mod format;
pub mod tree_info;
pub mod verify;

use config::{ConfigError, RunConfig, MAX_DEPTH};
use std::fmt;
use std::path::PathBuf;

/// Why a command did not complete, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Resource(String),
    /// A computation failed outright (not a violated check; those are reported).
    Run(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Run(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Resource(m) => write!(f, "resource limit: {m}"),
            Failure::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<sptree::Error> for Failure {
    fn from(e: sptree::Error) -> Self {
        use sptree::Error as E;
        match e {
            E::DenseLimit { .. } | E::Overflow(_) => Failure::Resource(e.to_string()),
            E::Param(_) | E::Range(_) | E::Index { .. } => {
                Failure::Config(ConfigError { field: "(derived)".into(), message: e.to_string() })
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("i/o: {e}"))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

/// Exit code 0 when every assertion held, 1 otherwise.
pub fn verdict_code(pass: bool) -> i32 {
    if pass {
        0
    } else {
        1
    }
}

/// Output directory, created on demand.
pub fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

pub fn tree_params(cfg: &RunConfig) -> Result<sptree::tree::TreeParams, Failure> {
    if cfg.tree.depth > MAX_DEPTH {
        return Err(Failure::Resource(format!("depth {} exceeds {MAX_DEPTH}", cfg.tree.depth)));
    }
    let positions = cfg.tree.rule.to_rule().positions(u64::MAX);
    sptree::tree::TreeParams::new(cfg.tree.gamma, positions, cfg.tree.depth).map_err(|e| {
        Failure::Config(ConfigError { field: "tree".into(), message: e.to_string() })
    })
}
