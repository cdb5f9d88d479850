//! CLI error classification mapped onto exit codes.

use shrinkbound::bounds::BoundsError;
use shrinkbound::posterior::PosteriorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags or malformed option values (exit code 1).
    Usage,
    /// Unreadable or invalid input data (exit code 2).
    Data,
    /// Numerical failure in the analysis pipeline (exit code 3).
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<PosteriorError> for CliError {
    fn from(err: PosteriorError) -> Self {
        CliError::numeric(err.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(err: BoundsError) -> Self {
        CliError::numeric(err.to_string())
    }
}
