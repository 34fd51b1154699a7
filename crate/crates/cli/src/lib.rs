//! Command implementations behind the `tactloc` binary.

pub mod commands;
pub mod config;
pub mod heatmap;

use thiserror::Error;

pub use config::RunConfig;

/// Failure of a subcommand, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Missing(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<tactloc::Error> for CliError {
    fn from(e: tactloc::Error) -> Self {
        use tactloc::error::DatasetError;
        match &e {
            tactloc::Error::Dataset(DatasetError::Missing(_)) => CliError::Missing(e.to_string()),
            tactloc::Error::File { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Missing(e.to_string())
            }
            tactloc::Error::Config(m) => CliError::Config(m.clone()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<tactloc::error::DatasetError> for CliError {
    fn from(e: tactloc::error::DatasetError) -> Self {
        tactloc::Error::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
