use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid perturbation target: {0}")]
    InvalidTarget(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("perturbation dimension {p} exceeds the Hessian limit of {limit}")]
    HessianTooLarge { p: usize, limit: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("model document version {found} is not supported (expected {expected}); re-save the model with this release")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
