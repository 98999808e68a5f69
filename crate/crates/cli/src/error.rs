use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("no result for method {method} in {mode} enrollment")]
    MissingCell { method: String, mode: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::MissingCell { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Wraps a library error, prefixing `context` (usually a file name).
    pub fn core(context: impl std::fmt::Display, err: svr_core::Error) -> CliError {
        let msg = format!("{context}: {err}");
        if err.is_numerical() {
            CliError::Numerical(msg)
        } else if matches!(err, svr_core::Error::InvalidConfig(_)) {
            CliError::Usage(msg)
        } else {
            CliError::Data(msg)
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
