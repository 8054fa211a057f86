use thiserror::Error;

pub type Result<T> = std::result::Result<T, LampError>;

#[derive(Debug, Error)]
pub enum LampError {
    /// Inconsistent dimensions between inputs, or malformed containers.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("patch size {patch} does not divide field {height}x{width}")]
    Indivisible { height: usize, width: usize, patch: usize },

    #[error("component {component} has zero variance over the training range")]
    ZeroVariance { component: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Singular systems, failed decompositions, non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LampError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        LampError::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LampError::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        LampError::Numerical(msg.into())
    }
}
