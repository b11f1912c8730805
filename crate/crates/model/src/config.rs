use serde::{Deserialize, Serialize};
use vap_core::{BinConfig, FrameRate};

use crate::ModelError;

/// Rate of the speech inputs for the audio-derived frontends.
pub const SOURCE_RATE: u32 = 100;

/// Which speech representation feeds the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frontend {
    /// Voice activity only, plus optional extra per-frame channels at the
    /// model frame rate (e.g. synthetic prosody cues).
    VaOnly { extra_dims: usize },
    /// Log-mel filterbank of the mono mix, 100 Hz.
    LogMel { mels: usize },
    /// Precomputed 100 Hz embeddings.
    ExternalEmbeddings { dims: usize },
}

impl Frontend {
    pub fn speech_dims(self) -> usize {
        match self {
            Frontend::VaOnly { extra_dims } => extra_dims,
            Frontend::LogMel { mels } => mels,
            Frontend::ExternalEmbeddings { dims } => dims,
        }
    }

    pub fn source_rate(self, frame_rate: FrameRate) -> u32 {
        match self {
            Frontend::VaOnly { .. } => frame_rate.hz(),
            _ => SOURCE_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub frame_rate: FrameRate,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub dropout: f64,
    pub frontend: Frontend,
    /// Segment length in seconds.
    pub context: f64,
    /// Overlap between consecutive segments in seconds.
    pub overlap: f64,
    pub bins: BinConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frame_rate: FrameRate::HZ50,
            layers: 4,
            heads: 8,
            dim: 256,
            dropout: 0.1,
            frontend: Frontend::ExternalEmbeddings { dims: 256 },
            context: 10.0,
            overlap: 1.0,
            bins: BinConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.layers == 0 || self.heads == 0 || self.dim == 0 {
            return bad("layers, heads and dim must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return bad(format!("dim {} is not divisible by {} heads", self.dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.context > 0.0 && self.overlap >= 0.0 && self.overlap < self.context) {
            return bad(format!("context {} s / overlap {} s", self.context, self.overlap));
        }
        if self.frontend.source_rate(self.frame_rate) % self.frame_rate.hz() != 0 {
            return bad("source rate is not a multiple of the frame rate".into());
        }
        self.bins.validate()?;
        Ok(())
    }

    /// Input frames folded into one model frame.
    pub fn stride(&self) -> usize {
        (self.frontend.source_rate(self.frame_rate) / self.frame_rate.hz()) as usize
    }

    pub fn context_frames(&self) -> usize {
        self.frame_rate.frames(self.context)
    }

    pub fn overlap_frames(&self) -> usize {
        self.frame_rate.frames(self.overlap)
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Linear attention-bias slope of each head, `2^(-8k/heads)`.
    pub fn alibi_slopes(&self) -> Vec<f64> {
        (1..=self.heads).map(|k| 2f64.powf(-8.0 * k as f64 / self.heads as f64)).collect()
    }
}
