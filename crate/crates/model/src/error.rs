use thiserror::Error;
use vap_core::{VaError, ZeroShotError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("sequence of {len} frames exceeds the {max}-frame context")]
    TooLong { len: usize, max: usize },
    #[error("label {label} at frame {frame} is not a projection class")]
    LabelOutOfRange { frame: usize, label: usize },
    #[error("non-finite activation in {layer}")]
    NonFinite { layer: String },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Va(#[from] VaError),
    #[error(transparent)]
    ZeroShot(#[from] ZeroShotError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
