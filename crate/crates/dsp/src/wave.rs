use std::fmt;

use vap_core::Speaker;

use crate::DspError;

pub const CANONICAL_RATE: u32 = 16_000;
/// Peak level every channel is normalized to before perturbation.
pub const NORMALIZE_DBFS: f64 = -3.0;

/// Mono PCM for one speaker, samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
    pub speaker: Speaker,
}

impl Waveform {
    pub fn new(sample_rate: u32, samples: Vec<f64>, speaker: Speaker) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidWave("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite() || x.abs() > 1.0) {
            return Err(DspError::InvalidWave(format!(
                "sample {i} is {}; samples must be finite and within [-1, 1]",
                samples[i]
            )));
        }
        Ok(Waveform { sample_rate, samples, speaker })
    }

    pub fn silent(sample_rate: u32, len: usize, speaker: Speaker) -> Self {
        Waveform { sample_rate, samples: vec![0.0; len], speaker }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Sample index nearest to `t` seconds, clamped to the signal.
    pub fn index_at(&self, t: f64) -> usize {
        ((t * self.sample_rate as f64).round().max(0.0) as usize).min(self.samples.len())
    }
}

/// Non-fatal conditions met while transforming.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A span that should have been resynthesized had no voiced frames.
    NoVoicedFrames { start: f64, end: f64 },
    /// Speech frames whose gain hit the clamp.
    GainClamped { frames: usize },
    /// Speech frames with no energy at all.
    ZeroEnergyFrames { frames: usize },
    /// Output samples clipped back into [-1, 1].
    Clipped { samples: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NoVoicedFrames { start, end } => {
                write!(f, "no voiced frames in {start:.3}-{end:.3} s, passed through")
            }
            Warning::GainClamped { frames } => write!(f, "{frames} frames hit the gain clamp"),
            Warning::ZeroEnergyFrames { frames } => write!(f, "{frames} speech frames had zero energy"),
            Warning::Clipped { samples } => write!(f, "{samples} samples clipped"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub wave: Waveform,
    pub warnings: Vec<Warning>,
}

impl Transformed {
    pub(crate) fn finish(template: &Waveform, mut samples: Vec<f64>, mut warnings: Vec<Warning>) -> Self {
        let mut clipped = 0;
        for x in &mut samples {
            if x.abs() > 1.0 {
                *x = x.clamp(-1.0, 1.0);
                clipped += 1;
            }
        }
        if clipped > 0 {
            warnings.push(Warning::Clipped { samples: clipped });
        }
        Transformed {
            wave: Waveform { sample_rate: template.sample_rate, samples, speaker: template.speaker },
            warnings,
        }
    }

    pub(crate) fn unchanged(wave: &Waveform, warnings: Vec<Warning>) -> Self {
        Transformed { wave: wave.clone(), warnings }
    }
}

/// Scales so the largest magnitude sits at `target_dbfs`. Silence is returned as is.
pub fn peak_normalize(wave: &Waveform, target_dbfs: f64) -> Waveform {
    let peak = wave.peak();
    if peak == 0.0 {
        return wave.clone();
    }
    let gain = 10f64.powf(target_dbfs / 20.0) / peak;
    Waveform {
        sample_rate: wave.sample_rate,
        samples: wave.samples.iter().map(|x| (x * gain).clamp(-1.0, 1.0)).collect(),
        speaker: wave.speaker,
    }
}

/// Averages two channels into one mono signal (the longer length wins).
pub fn mix(a: &Waveform, b: &Waveform) -> Result<Vec<f64>, DspError> {
    if a.sample_rate != b.sample_rate {
        return Err(DspError::InvalidWave(format!(
            "cannot mix {} Hz with {} Hz",
            a.sample_rate, b.sample_rate
        )));
    }
    let n = a.len().max(b.len());
    Ok((0..n)
        .map(|i| 0.5 * (a.samples.get(i).unwrap_or(&0.0) + b.samples.get(i).unwrap_or(&0.0)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(Waveform::new(16000, vec![0.0, 1.5], Speaker::A).is_err());
        assert!(Waveform::new(16000, vec![f64::NAN], Speaker::A).is_err());
        assert!(Waveform::new(0, vec![], Speaker::A).is_err());
        assert!(Waveform::new(16000, vec![-1.0, 1.0], Speaker::B).is_ok());
    }

    #[test]
    fn peak_normalization_hits_target() {
        let w = Waveform::new(16000, vec![0.1, -0.25, 0.2], Speaker::A).unwrap();
        let n = peak_normalize(&w, NORMALIZE_DBFS);
        assert!((n.peak() - 10f64.powf(-3.0 / 20.0)).abs() < 1e-12);
        let s = Waveform::silent(16000, 10, Speaker::A);
        assert_eq!(peak_normalize(&s, NORMALIZE_DBFS), s);
    }
}
