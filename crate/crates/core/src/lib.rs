//! Core data model for voice activity projection (VAP) turn-taking analysis.
//!
//! * [`va`] rasterizes speaker segments into frame grids, packs the 2 s future
//!   window into one of 256 projection classes, and computes activity history.
//! * [`events`] extracts Shift/Hold gaps and Shift/Backchannel prediction
//!   regions from a grid.
//! * [`zeroshot`] turns per-frame class distributions into event
//!   probabilities and scores them with weighted F1.

pub mod events;
pub mod io;
pub mod va;
pub mod zeroshot;

pub use events::{
    BackchannelEvent, EventConfig, EventSet, GapEvent, GapLabel, Polarity, PredictionKind,
    PredictionRegion,
};
pub use va::{
    BinConfig, FrameRate, ProjectionLabel, Speaker, VaError, VaGrid, VaHistory, VaSegment,
    NUM_CLASSES,
};
pub use zeroshot::{AggregationConfig, EvalReport, Metric, ProbSequence, ZeroShotError};
