//! Phone duration normalization by waveform-similarity overlap-add.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{DspError, Transformed, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phone {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

/// Sorted, non-overlapping phones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhoneAlignment {
    phones: Vec<Phone>,
}

impl PhoneAlignment {
    pub fn new(phones: Vec<Phone>) -> Result<Self, DspError> {
        for (index, p) in phones.iter().enumerate() {
            let bad = |reason: String| Err(DspError::InvalidAlignment { index, reason });
            if !(p.start.is_finite() && p.end.is_finite() && p.start >= 0.0) {
                return bad(format!("times {}-{} must be finite and non-negative", p.start, p.end));
            }
            if !(p.end > p.start) {
                return bad(format!("end {} not after start {}", p.end, p.start));
            }
            if index > 0 && p.start < phones[index - 1].end - 1e-9 {
                return bad(format!("starts at {} before the previous phone ends", p.start));
            }
        }
        Ok(PhoneAlignment { phones })
    }

    pub fn phones(&self) -> &[Phone] {
        &self.phones
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WsolaConfig {
    /// Hann window length in seconds; output hop is half of it.
    pub window: f64,
    /// Largest alignment search offset in seconds.
    pub tolerance: f64,
}

impl Default for WsolaConfig {
    fn default() -> Self {
        WsolaConfig { window: 0.03, tolerance: 0.01 }
    }
}

/// Monotone piecewise-linear map between input and output time.
struct TimeMap {
    knots: Vec<(f64, f64)>,
}

impl TimeMap {
    fn input_time(&self, out_t: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.1 <= out_t);
        let (a, b) = match i {
            0 => (self.knots[0], self.knots[1]),
            i if i >= self.knots.len() => (self.knots[i - 2], self.knots[i - 1]),
            i => (self.knots[i - 1], self.knots[i]),
        };
        if b.1 == a.1 {
            return a.0;
        }
        a.0 + (out_t - a.1) * (b.0 - a.0) / (b.1 - a.1)
    }

    fn output_duration(&self) -> f64 {
        self.knots.last().unwrap().1
    }
}

/// Rescales each aligned phone to its mean duration, keeping pitch.
///
/// Audio outside the aligned phones keeps its duration.
pub fn scale_durations(
    wave: &Waveform,
    alignment: &PhoneAlignment,
    phone_means: &BTreeMap<String, f64>,
) -> Result<Transformed, DspError> {
    scale_durations_with(wave, alignment, phone_means, &WsolaConfig::default())
}

pub fn scale_durations_with(
    wave: &Waveform,
    alignment: &PhoneAlignment,
    phone_means: &BTreeMap<String, f64>,
    cfg: &WsolaConfig,
) -> Result<Transformed, DspError> {
    if alignment.is_empty() {
        return Err(DspError::EmptyAlignment);
    }
    let dur = wave.duration();
    let mut knots = vec![(0.0, 0.0)];
    let mut out_t = 0.0;
    let mut in_t = 0.0;
    for (index, p) in alignment.phones().iter().enumerate() {
        let mean = *phone_means.get(&p.label).ok_or_else(|| DspError::MissingPhoneMean(p.label.clone()))?;
        if !(mean.is_finite() && mean > 0.0) {
            return Err(DspError::InvalidParameter(format!("mean duration {mean} for phone '{}'", p.label)));
        }
        if p.end > dur + 1e-6 {
            return Err(DspError::InvalidAlignment {
                index,
                reason: format!("ends at {} s, after the audio ({dur:.3} s)", p.end),
            });
        }
        out_t += p.start - in_t;
        knots.push((p.start, out_t));
        out_t += mean;
        knots.push((p.end, out_t));
        in_t = p.end;
    }
    if dur > in_t {
        out_t += dur - in_t;
        knots.push((dur, out_t));
    }
    let map = TimeMap { knots };
    let sr = wave.sample_rate as f64;
    let out_len = (map.output_duration() * sr).round() as usize;
    Ok(Transformed::finish(wave, wsola(&wave.samples, sr, &map, out_len, cfg), Vec::new()))
}

fn wsola(x: &[f64], sr: f64, map: &TimeMap, out_len: usize, cfg: &WsolaConfig) -> Vec<f64> {
    let n = ((cfg.window * sr).round() as usize).max(4) & !1;
    let hop = n / 2;
    let tol = (cfg.tolerance * sr).round() as isize;
    let window: Vec<f64> =
        (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    let sample = |i: isize| if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { 0.0 };

    // output frames start at -hop so every output sample is covered twice
    let offset = hop;
    let mut acc = vec![0.0; out_len + n + offset];
    let mut wsum = vec![0.0; out_len + n + offset];
    let mut prev: Option<isize> = None;
    let mut pos = -(hop as isize);
    while pos < out_len as isize {
        let center_out = (pos as f64 + 0.5 * n as f64) / sr;
        let nominal = (map.input_time(center_out) * sr).round() as isize - (n / 2) as isize;
        let chosen = match prev {
            None => nominal,
            Some(p) => {
                let natural = p + hop as isize;
                let reference: Vec<f64> = (0..hop as isize).map(|i| sample(natural + i)).collect();
                let mut best = (f64::NEG_INFINITY, nominal);
                for delta in -tol..=tol {
                    let cand = nominal + delta;
                    let (mut dot, mut energy) = (0.0, 0.0);
                    for (i, r) in reference.iter().enumerate() {
                        let v = sample(cand + i as isize);
                        dot += v * r;
                        energy += v * v;
                    }
                    let score = if energy > 0.0 { dot / energy.sqrt() } else { 0.0 };
                    if score > best.0 {
                        best = (score, cand);
                    }
                }
                best.1
            }
        };
        for (i, w) in window.iter().enumerate() {
            let o = (pos + offset as isize) as usize + i;
            acc[o] += w * sample(chosen + i as isize);
            wsum[o] += w;
        }
        prev = Some(chosen);
        pos += hop as isize;
    }
    (0..out_len)
        .map(|i| {
            let w = wsum[i + offset];
            if w > 1e-6 {
                acc[i + offset] / w
            } else {
                0.0
            }
        })
        .collect()
}
