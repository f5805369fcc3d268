use thiserror::Error;

/// Errors raised by the simulation and exact-evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },

    #[error("function degree {degree} exceeds population size {population}")]
    DegreeExceedsPopulation { degree: usize, population: usize },

    #[error("dual degree would exceed cap {cap}")]
    DegreeCapExceeded { cap: usize },

    #[error("time {t} outside valid range (0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("rate matrix is reducible")]
    ReducibleChain,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
