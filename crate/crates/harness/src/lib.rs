//! Synthetic dialogs with prosody-like cues, perturbation pipelines and
//! reporting around the voice-activity projection model.

pub mod config;
pub mod cues;
mod error;
pub mod pipeline;
pub mod plot;
pub mod prosody;
pub mod report;
pub mod scp;
pub mod synth;

pub use config::HarnessConfig;
pub use cues::{ablate_cue, offset_cue, CueChannel, CueTracks, INTENSITY, PITCH};
pub use error::HarnessError;
pub use pipeline::{
    dialog_features, load_dialog, read_manifest, run_pipeline, run_scp, train_on_dialogs, Dialog, DialogEntry,
    DialogSource, Perturbation, PipelineOptions, RunReport, ScpEntry, ScpInput,
};
pub use report::{read_report, write_report};
pub use scp::{phrase_pairs, synth_scp_pair, synth_scp_pairs, ScpPair, Variant};
pub use synth::{generate_corpus, generate_dialog, CueDirection, CueSpec, SynthDialog, SynthDialogSpec};
