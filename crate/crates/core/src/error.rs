use thiserror::Error;

use crate::model::DonorId;

/// Errors raised by the planning engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("donor {0} has no geographic anchor")]
    MissingAnchor(DonorId),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("model construction failed: {0}")]
    ModelConstruction(String),

    #[error("unknown reference: {0}")]
    UnknownReference(String),

    #[error("{file}: line {line}: {message}")]
    Parse { file: String, line: u64, message: String },

    #[error("lp relaxation failed: {0}")]
    Relaxation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
