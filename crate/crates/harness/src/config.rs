//! TOML configuration covering the model, training, aggregation, synthesis
//! and event settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vap_core::{AggregationConfig, EventConfig, FrameRate};
use vap_model::{ModelConfig, TrainConfig};

use crate::synth::SynthDialogSpec;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub aggregation: AggregationConfig,
    pub synth: SynthDialogSpec,
    pub events: EventConfig,
    /// Fraction of dialogs held out for validation while training.
    pub valid_fraction: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            aggregation: AggregationConfig::default(),
            synth: SynthDialogSpec::default(),
            events: EventConfig::default(),
            valid_fraction: 0.1,
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::from(e).at("config", path))?;
        Self::from_toml(&text).map_err(|e| e.at("config", path))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Sets the frame rate everywhere it appears.
    pub fn set_frame_rate(&mut self, fr: FrameRate) {
        self.model.frame_rate = fr;
        self.synth.frame_rate = fr;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate()?;
        self.aggregation.validate()?;
        self.synth.validate()?;
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(HarnessError::Invalid(format!("valid_fraction {} outside [0, 1)", self.valid_fraction)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = HarnessConfig::default();
        let back = HarnessConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = HarnessConfig::from_toml("[model]\ndim = 64\nheads = 4\n[synth]\nshift_rate = 0.3\n").unwrap();
        assert_eq!(cfg.model.dim, 64);
        assert_eq!(cfg.model.layers, ModelConfig::default().layers);
        assert_eq!(cfg.synth.shift_rate, 0.3);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(HarnessConfig::from_toml("colour = 3\n").is_err());
        assert!(HarnessConfig::from_toml("[model]\ndim = 30\nheads = 8\n").is_err());
    }
}
