//! Config-driven runner for accelflow: single runs, comparisons and
//! re-verification of stored trajectories.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] config::ConfigError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] accelflow::Error),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    VerificationFailed(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::VerificationFailed(_) => 4,
            _ => 1,
        }
    }
}
