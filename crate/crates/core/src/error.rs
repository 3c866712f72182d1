use thiserror::Error;

use crate::measurement::Outcome;

#[derive(Debug, Error)]
pub enum Error {
    #[error("outcome {outcome} has probability {probability:e}, below the 1e-14 floor")]
    ZeroProbabilityOutcome { outcome: Outcome, probability: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("tree depth {depth} exceeds the limit of {max}")]
    DepthLimit { depth: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed weight file: {0}")]
    Format(String),

    #[error("weight file checksum mismatch")]
    Checksum,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
