//! Command-line studies on top of `vfm-core`: configuration, the end-to-end
//! study runner, hyperparameter tuning and shift detection.

pub mod commands;
pub mod config;
pub mod presets;
pub mod study;
pub mod tune;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit code: 1 config, 2 data (including I/O), 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}
