//! Signal perturbations used to probe which prosodic cues a turn-taking
//! model relies on.
//!
//! Every transform takes a [`Waveform`] and returns a [`Transformed`] holding
//! the new wave plus any non-fatal [`Warning`]s. Sample rate is always
//! preserved; length is preserved by everything except
//! [`scale_durations`].

mod duration;
mod error;
mod f0;
mod intensity;
pub mod io;
mod psola;
mod resample;
mod wave;

pub use duration::{scale_durations, Phone, PhoneAlignment, WsolaConfig};
pub use error::DspError;
pub use f0::{estimate_f0, estimate_f0_with, F0Config, F0Contour, F0Frame};
pub use intensity::{flatten_intensity, flatten_intensity_with, frame_rms, IntensityConfig};
pub use psola::{flatten_f0, resynthesize, shift_f0};
pub use resample::{low_pass, resample, SincKernel};
pub use wave::{mix, peak_normalize, Transformed, Warning, Waveform, CANONICAL_RATE, NORMALIZE_DBFS};
