//! Experiment configuration, `FERR` field dumps, CSV reports and the
//! subcommands behind the `ferro` binary.

pub mod commands;
pub mod config;
pub mod dump;
pub mod report;

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration:\n{0}")]
    Config(#[from] config::ConfigErrors),
    #[error(transparent)]
    Core(#[from] ferro_core::FerroError),
    #[error("run stopped: {0}")]
    Run(#[from] ferro_core::solver::RunAborted),
    #[error("field dump: {0}")]
    Dump(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
