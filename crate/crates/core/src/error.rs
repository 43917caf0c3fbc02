use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("sample count must be at least {min}, got {got}")]
    EmptyBatch { min: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Convergence { requested: f64, achieved: f64 },

    #[error("dimension {dim} exceeds the enumeration cap of {limit}")]
    CapExceeded { dim: usize, limit: usize },

    #[error("precondition unmet: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
