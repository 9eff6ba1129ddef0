use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced to the user. Usage errors exit with 2, everything else
/// with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A filter or selection removed everything.
    #[error("empty output: {0}")]
    ExplicitEmptyOutput(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse { .. } => "parse",
            CliError::Io { .. } => "io",
            CliError::ExplicitEmptyOutput(_) => "empty_output",
            CliError::Runtime(_) => "runtime",
        }
    }
}

/// Bad configurations and synthetic specs come from flags, so they are usage
/// errors; numerical failures are runtime errors.
impl From<vlmd::Error> for CliError {
    fn from(e: vlmd::Error) -> Self {
        match e {
            vlmd::Error::Config(_) | vlmd::Error::Spec(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
