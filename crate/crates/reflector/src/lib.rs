//! Benchmarks, file formats and the command-line driver for reflector design.

pub mod bench;
pub mod cli;
pub mod config;
pub mod io;
pub mod solve;
pub mod svg;
pub mod truth;

/// Failures grouped by the process exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] reflector_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}
