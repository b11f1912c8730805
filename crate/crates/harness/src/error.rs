use std::path::PathBuf;

use thiserror::Error;
use vap_core::{VaError, ZeroShotError};
use vap_dsp::DspError;
use vap_model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid dialog spec: {0}")]
    InvalidSpec(String),
    #[error("unknown cue channel `{0}`")]
    UnknownCue(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{stage} failed for {}: {source}", file.display())]
    Stage {
        stage: &'static str,
        file: PathBuf,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Va(#[from] VaError),
    #[error(transparent)]
    ZeroShot(#[from] ZeroShotError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Wraps an error with the pipeline stage and file it came from.
    pub fn at(self, stage: &'static str, file: impl Into<PathBuf>) -> Self {
        HarnessError::Stage { stage, file: file.into(), source: Box::new(self) }
    }

    /// True for bad user input as opposed to a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::InvalidSpec(_)
            | HarnessError::UnknownCue(_)
            | HarnessError::Invalid(_)
            | HarnessError::Va(_)
            | HarnessError::Config(_)
            | HarnessError::Json(_)
            | HarnessError::Csv(_) => true,
            HarnessError::Stage { source, .. } => source.is_validation(),
            HarnessError::ZeroShot(e) => !matches!(e, ZeroShotError::MissingFrames { .. }),
            HarnessError::Model(e) => matches!(
                e,
                ModelError::InvalidConfig(_)
                    | ModelError::Shape(_)
                    | ModelError::TooLong { .. }
                    | ModelError::LabelOutOfRange { .. }
                    | ModelError::Checkpoint(_)
                    | ModelError::EmptyTrainingSet
                    | ModelError::EmptyValidationSet
            ),
            HarnessError::Dsp(e) => !matches!(e, DspError::Io(_)),
            HarnessError::Io(_) => false,
        }
    }

    /// Process exit code: 1 for validation errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}
