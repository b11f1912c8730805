//! Per-speaker intensity flattening.

use serde::{Deserialize, Serialize};
use vap_core::VaSegment;

use crate::{DspError, Transformed, Warning, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntensityConfig {
    /// Analysis frame length in seconds.
    pub frame: f64,
    /// Largest boost or cut in dB.
    pub max_gain_db: f64,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        IntensityConfig { frame: 0.01, max_gain_db: 20.0 }
    }
}

/// RMS of consecutive non-overlapping frames of `frame_len` samples (the
/// last frame may be short).
pub fn frame_rms(x: &[f64], frame_len: usize) -> Vec<f64> {
    x.chunks(frame_len.max(1))
        .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

pub fn flatten_intensity(wave: &Waveform, va: &[VaSegment]) -> Result<Transformed, DspError> {
    flatten_intensity_with(wave, va, &IntensityConfig::default())
}

/// Maps every speech frame's RMS to the speaker's mean speech-frame RMS.
///
/// A frame is speech when its center lies inside one of the wave speaker's
/// VA segments. Gains are interpolated between neighbouring speech frame
/// centers; non-speech samples are left exactly as they were.
pub fn flatten_intensity_with(
    wave: &Waveform,
    va: &[VaSegment],
    cfg: &IntensityConfig,
) -> Result<Transformed, DspError> {
    if !(cfg.frame > 0.0 && cfg.max_gain_db >= 0.0) {
        return Err(DspError::InvalidParameter(format!(
            "frame {} s and gain clamp {} dB must be positive",
            cfg.frame, cfg.max_gain_db
        )));
    }
    let sr = wave.sample_rate as f64;
    let flen = (cfg.frame * sr).round().max(1.0) as usize;
    let rms = frame_rms(&wave.samples, flen);
    let own: Vec<&VaSegment> = va.iter().filter(|s| s.speaker == wave.speaker).collect();
    let speech: Vec<bool> = (0..rms.len())
        .map(|k| {
            let center = (k * flen) as f64 / sr + 0.5 * flen as f64 / sr;
            own.iter().any(|s| center >= s.start && center < s.end)
        })
        .collect();
    let n_speech = speech.iter().filter(|&&s| s).count();
    if n_speech == 0 {
        return Ok(Transformed::unchanged(wave, Vec::new()));
    }
    let target = rms.iter().zip(&speech).filter(|(_, &s)| s).map(|(r, _)| r).sum::<f64>() / n_speech as f64;

    let max_gain = 10f64.powf(cfg.max_gain_db / 20.0);
    let mut clamped = 0;
    let mut zero = 0;
    let gains: Vec<f64> = rms
        .iter()
        .zip(&speech)
        .map(|(&r, &s)| {
            if !s {
                return 1.0;
            }
            if r == 0.0 {
                zero += 1;
                clamped += 1;
                return max_gain;
            }
            let g = target / r;
            if g > max_gain || g < 1.0 / max_gain {
                clamped += 1;
            }
            g.clamp(1.0 / max_gain, max_gain)
        })
        .collect();

    let half = 0.5 * flen as f64;
    let out: Vec<f64> = wave
        .samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let k = i / flen;
            if !speech[k] {
                return x;
            }
            // neighbouring center on the side of this sample
            let offset = (i - k * flen) as f64 + 0.5 - half;
            let j = if offset < 0.0 { k.checked_sub(1) } else { Some(k + 1) };
            let g = match j {
                Some(j) if j < gains.len() && speech[j] => {
                    let a = offset.abs() / flen as f64;
                    gains[k] * (1.0 - a) + gains[j] * a
                }
                _ => gains[k],
            };
            x * g
        })
        .collect();

    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(Warning::GainClamped { frames: clamped });
    }
    if zero > 0 {
        warnings.push(Warning::ZeroEnergyFrames { frames: zero });
    }
    Ok(Transformed::finish(wave, out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vap_core::Speaker;

    #[test]
    fn non_speech_is_untouched() {
        let s: Vec<f64> = (0..16000).map(|i| 0.3 * ((i as f64) * 0.05).sin() * if i < 8000 { 1.0 } else { 0.2 }).collect();
        let w = Waveform::new(16000, s, Speaker::A).unwrap();
        let va = [VaSegment::new(Speaker::A, 0.0, 0.5), VaSegment::new(Speaker::B, 0.5, 1.0)];
        let out = flatten_intensity(&w, &va).unwrap().wave;
        assert_eq!(&out.samples[8000..], &w.samples[8000..]);
    }

    #[test]
    fn other_speakers_segments_are_ignored() {
        let w = Waveform::new(16000, vec![0.1; 1600], Speaker::A).unwrap();
        let va = [VaSegment::new(Speaker::B, 0.0, 0.1)];
        let t = flatten_intensity(&w, &va).unwrap();
        assert_eq!(t.wave, w);
        assert!(t.warnings.is_empty());
    }
}
