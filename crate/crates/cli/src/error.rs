use std::path::PathBuf;

use cbi_core::CbiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Input { context: String, source: CbiError },

    #[error("numerical failure in {context}: {source}")]
    Numerical { context: String, source: CbiError },

    #[error("cannot {action} {path}: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{failed} comparison(s) failed")]
    Comparison { failed: usize },

    #[error("validation failed for: {0}")]
    Validation(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Sorts a core error into an input problem or a numerical failure.
    pub fn from_core(context: impl Into<String>, source: CbiError) -> Self {
        let context = context.into();
        match source {
            CbiError::StepSizeUnderflow { .. }
            | CbiError::StepBudgetExhausted { .. }
            | CbiError::TruncationTooSmall { .. }
            | CbiError::DivergentIntegral(_)
            | CbiError::ZeroMass => CliError::Numerical { context, source },
            _ => CliError::Input { context, source },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Comparison { .. } | CliError::Validation(_) => 1,
            CliError::Config { .. } | CliError::Input { .. } | CliError::Io { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
