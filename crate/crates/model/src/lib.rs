//! Voice activity projection predictor: feature frontends, a causal
//! transformer with linear distance biases on attention, the 256-class
//! projection head, and training with hand-written gradients.
//!
//! Everything numeric is generic over the float type so the same code runs
//! in `f32` for training and `f64` for gradient checks.

mod checkpoint;
mod config;
mod error;
pub mod frontend;
mod layers;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, TrainingMetadata};
pub use config::{Frontend, ModelConfig, SOURCE_RATE};
pub use error::ModelError;
pub use frontend::{frontend, log_mel, va_channels, Features, FrontendInput};
pub use layers::{gelu, LayerNorm, Linear};
pub use loss::{cross_entropy_sum, vap_loss};
pub use model::{softmax_rows, Block, ForwardCache, VapModel, HISTORY_DIMS, VA_DIMS};
pub use optim::{clip_grad_norm, AdamW, EarlyStopping, Verdict};
pub use train::{
    evaluate_loss, frame_labels, predict_dialog, segment_dialog, split_train_valid, train, EpochStats, Segment,
    StopReason, TrainConfig, TrainOutcome,
};
