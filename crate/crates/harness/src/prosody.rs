//! Duration and peak relative F0 of the syllable ending at a completion
//! point, from user-supplied syllable boundaries.

use serde::{Deserialize, Serialize};
use vap_dsp::{estimate_f0, Waveform};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Syllable {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyllableStats {
    /// Length of the last syllable, seconds.
    pub duration: f64,
    /// Highest voiced F0 inside the last syllable over the median voiced F0
    /// of the whole utterance; `None` when either is unvoiced.
    pub max_relative_f0: Option<f64>,
}

/// Statistics of the last syllable in `syllables` (ordered, non-overlapping,
/// the final one ending at the completion point).
pub fn last_syllable_stats(
    wave: &Waveform,
    syllables: &[Syllable],
    f0_min: f64,
    f0_max: f64,
) -> Result<SyllableStats, HarnessError> {
    let last = *syllables.last().ok_or_else(|| HarnessError::Invalid("no syllables".into()))?;
    for (i, s) in syllables.iter().enumerate() {
        if !(s.start.is_finite() && s.end > s.start) || (i > 0 && s.start < syllables[i - 1].end) {
            return Err(HarnessError::Invalid(format!("syllable {i} is empty or overlaps its predecessor")));
        }
    }
    if last.end > wave.duration() + 1e-9 {
        return Err(HarnessError::Invalid(format!("syllable ends at {} s after the audio", last.end)));
    }
    let contour = estimate_f0(wave, f0_min, f0_max)?;
    let mut utterance = contour.voiced_in(syllables[0].start, last.end);
    let peak = contour.voiced_in(last.start, last.end).into_iter().fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.max(f))));
    utterance.sort_by(f64::total_cmp);
    let median = match utterance.len() {
        0 => None,
        n if n % 2 == 1 => Some(utterance[n / 2]),
        n => Some(0.5 * (utterance[n / 2 - 1] + utterance[n / 2])),
    };
    Ok(SyllableStats {
        duration: last.end - last.start,
        max_relative_f0: peak.zip(median).map(|(p, m)| p / m),
    })
}

/// Durations with their mean removed, as used to compare versions spoken by
/// different voices.
pub fn mean_shifted_durations(stats: &[SyllableStats]) -> Vec<f64> {
    let mean = stats.iter().map(|s| s.duration).sum::<f64>() / stats.len().max(1) as f64;
    stats.iter().map(|s| s.duration - mean).collect()
}
