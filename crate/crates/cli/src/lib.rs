//! Batch front-end for the lattice quasicontinuum solver.

pub mod config;
pub mod cook;
pub mod runner;

use qclat_core::QcError;
use thiserror::Error;

/// Environment variable naming the directory under which run outputs go.
pub const OUTPUT_ROOT_ENV: &str = "QCLAT_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] QcError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for failures while meshing or solving, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(QcError::InvalidInput(_) | QcError::UnknownTopology(_) | QcError::Topology(_)) => 2,
            CliError::Core(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}
