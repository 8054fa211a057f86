use lamp_core::LampError;
use thiserror::Error;

/// Failure classes with stable process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or inputs that fail validation (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, unwritable or malformed files (exit 3).
    #[error("{0}")]
    Io(String),
    /// Singular systems and non-finite results (exit 4).
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<LampError> for CliError {
    fn from(e: LampError) -> Self {
        let msg = e.to_string();
        match e {
            LampError::Shape(_)
            | LampError::Indivisible { .. }
            | LampError::ZeroVariance { .. }
            | LampError::InvalidArgument(_) => CliError::Usage(msg),
            LampError::Numerical(_) => CliError::Numerical(msg),
            LampError::Format(_) | LampError::Io(_) => CliError::Io(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
