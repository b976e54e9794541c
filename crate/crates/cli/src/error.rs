use std::fmt;

use spg_core::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: msg.into(),
        }
    }

    /// Treats a library error as a configuration problem regardless of its kind.
    pub fn config(err: Error) -> Self {
        CliError::usage(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Config(_) => EXIT_USAGE,
            Error::Degenerate { .. } => EXIT_DEGENERATE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::data(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::data(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
