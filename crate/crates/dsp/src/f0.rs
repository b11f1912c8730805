//! Pitch tracking with the cumulative-mean-normalized difference function.

use serde::{Deserialize, Serialize};

use crate::{DspError, Waveform};

/// Dip depth accepted when re-picking a frame that jumped an octave.
const OCTAVE_ACCEPT: f64 = 0.5;
/// Frames below this RMS are never voiced.
const ABSOLUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    pub time: f64,
    /// `None` when unvoiced.
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    pub hop: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub frames: Vec<F0Frame>,
}

impl F0Contour {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter_map(|f| f.f0)
    }

    /// Voiced values of frames whose time lies in `[start, end)`.
    pub fn voiced_in(&self, start: f64, end: f64) -> Vec<f64> {
        self.frames
            .iter()
            .filter(|f| f.time >= start && f.time < end)
            .filter_map(|f| f.f0)
            .collect()
    }

    pub fn voicing_rate(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.voiced().count() as f64 / self.frames.len() as f64
    }

    pub fn median_voiced(&self) -> Option<f64> {
        median(self.voiced().collect())
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::ContourMismatch(m));
        if !(self.hop > 0.0) {
            return bad(format!("hop {} must be positive", self.hop));
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return bad(format!("frame times not increasing at frame {}", i + 1));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(v) = f.f0 {
                if !(v >= self.f0_min && v <= self.f0_max) {
                    return bad(format!("frame {i} has f0 {v} outside [{}, {}]", self.f0_min, self.f0_max));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct F0Config {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Frame hop in seconds.
    pub hop: f64,
    /// Normalized-difference dip below which a frame counts as voiced.
    pub threshold: f64,
    /// Frames quieter than the loudest frame by more than this are unvoiced.
    pub silence_db: f64,
    /// Neighbours on each side used for octave-jump correction.
    pub octave_window: usize,
}

impl Default for F0Config {
    fn default() -> Self {
        F0Config { f0_min: 60.0, f0_max: 400.0, hop: 0.01, threshold: 0.15, silence_db: -45.0, octave_window: 5 }
    }
}

pub fn estimate_f0(wave: &Waveform, f0_min: f64, f0_max: f64) -> Result<F0Contour, DspError> {
    estimate_f0_with(wave, &F0Config { f0_min, f0_max, ..F0Config::default() })
}

struct Yin<'a> {
    x: &'a [f64],
    w: usize,
    tau_min: usize,
    tau_max: usize,
}

impl Yin<'_> {
    fn frame_len(&self) -> usize {
        self.w + self.tau_max + 2
    }

    fn cmndf(&self, start: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.tau_max + 2, 1.0);
        let x = &self.x[start..start + self.frame_len()];
        let head = &x[..self.w];
        let mut running = 0.0;
        for tau in 1..=self.tau_max + 1 {
            let d: f64 = head
                .iter()
                .zip(&x[tau..tau + self.w])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            running += d;
            out[tau] = if running > 0.0 { d * tau as f64 / running } else { 1.0 };
        }
    }

    /// First dip under `threshold`, walked down to its local minimum.
    fn first_dip(&self, d: &[f64], threshold: f64) -> Option<f64> {
        let mut tau = (self.tau_min..=self.tau_max).find(|&t| d[t] < threshold)?;
        while tau < self.tau_max && d[tau + 1] < d[tau] {
            tau += 1;
        }
        Some(refine(d, tau))
    }

    /// Deepest dip in `[lo, hi]`, if it is below `accept`.
    fn dip_near(&self, d: &[f64], lo: usize, hi: usize, accept: f64) -> Option<f64> {
        let lo = lo.max(self.tau_min);
        let hi = hi.min(self.tau_max);
        if lo > hi {
            return None;
        }
        let tau = (lo..=hi).min_by(|&a, &b| d[a].total_cmp(&d[b]))?;
        (d[tau] < accept).then(|| refine(d, tau))
    }
}

fn refine(d: &[f64], tau: usize) -> f64 {
    if tau == 0 || tau + 1 >= d.len() {
        return tau as f64;
    }
    let (a, b, c) = (d[tau - 1], d[tau], d[tau + 1]);
    let denom = a - 2.0 * b + c;
    if denom.abs() < 1e-12 {
        return tau as f64;
    }
    let shift = 0.5 * (a - c) / denom;
    tau as f64 + shift.clamp(-1.0, 1.0)
}

pub fn estimate_f0_with(wave: &Waveform, cfg: &F0Config) -> Result<F0Contour, DspError> {
    if !(cfg.f0_min > 0.0 && cfg.f0_max > cfg.f0_min) {
        return Err(DspError::InvalidParameter(format!(
            "f0 band [{}, {}] is empty",
            cfg.f0_min, cfg.f0_max
        )));
    }
    if !(cfg.hop > 0.0) {
        return Err(DspError::InvalidParameter(format!("hop {} must be positive", cfg.hop)));
    }
    let sr = wave.sample_rate as f64;
    if sr < 4.0 * cfg.f0_max {
        return Err(DspError::SampleRateTooLow { sample_rate: wave.sample_rate, f0_max: cfg.f0_max });
    }
    let mut contour = F0Contour { hop: cfg.hop, f0_min: cfg.f0_min, f0_max: cfg.f0_max, frames: Vec::new() };
    if wave.is_empty() {
        return Ok(contour);
    }

    let tau_max = (sr / cfg.f0_min).ceil() as usize;
    let yin = Yin { x: &wave.samples, w: tau_max, tau_min: ((sr / cfg.f0_max).floor() as usize).max(2), tau_max };
    let hop_n = (cfg.hop * sr).round().max(1.0) as usize;
    let n_frames = wave.len().div_ceil(hop_n);
    let flen = yin.frame_len();

    // analysis window start per frame, None where it would leave the signal
    let starts: Vec<Option<usize>> = (0..n_frames)
        .map(|k| {
            let s = (k * hop_n) as isize - (flen / 2) as isize;
            (s >= 0 && s as usize + flen <= wave.len()).then_some(s as usize)
        })
        .collect();
    let rms: Vec<f64> = starts
        .iter()
        .map(|s| match s {
            Some(s) => {
                let seg = &wave.samples[*s..s + flen];
                (seg.iter().map(|x| x * x).sum::<f64>() / flen as f64).sqrt()
            }
            None => 0.0,
        })
        .collect();
    let loudest = rms.iter().cloned().fold(0.0, f64::max);
    let gate = (loudest * 10f64.powf(cfg.silence_db / 20.0)).max(ABSOLUTE_FLOOR);

    let mut d = Vec::new();
    let raw: Vec<Option<f64>> = (0..n_frames)
        .map(|k| {
            let s = starts[k]?;
            if rms[k] < gate {
                return None;
            }
            yin.cmndf(s, &mut d);
            yin.first_dip(&d, cfg.threshold).map(|tau| sr / tau)
        })
        .collect();

    // octave jumps: compare each frame with the median of its voiced neighbours
    let mut fixed = raw.clone();
    for k in 0..n_frames {
        let Some(f) = raw[k] else { continue };
        let lo = k.saturating_sub(cfg.octave_window);
        let hi = (k + cfg.octave_window + 1).min(n_frames);
        let neighbours: Vec<f64> = (lo..hi).filter(|&j| j != k).filter_map(|j| raw[j]).collect();
        if neighbours.len() < 3 {
            continue;
        }
        let m = median(neighbours).unwrap();
        let ratio = f / m;
        if (0.7..=1.4).contains(&ratio) {
            continue;
        }
        yin.cmndf(starts[k].unwrap(), &mut d);
        let expect = sr / m;
        fixed[k] = yin
            .dip_near(&d, (expect / 1.2).floor() as usize, (expect * 1.2).ceil() as usize, OCTAVE_ACCEPT)
            .map(|tau| sr / tau);
    }

    contour.frames = fixed
        .into_iter()
        .enumerate()
        .map(|(k, f0)| F0Frame {
            time: (k * hop_n) as f64 / sr,
            f0: f0.filter(|v| *v >= cfg.f0_min && *v <= cfg.f0_max),
        })
        .collect();
    Ok(contour)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vap_core::Speaker;

    fn tone(freq: f64, secs: f64) -> Waveform {
        let n = (secs * 16000.0) as usize;
        let s = (0..n).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()).collect();
        Waveform::new(16000, s, Speaker::A).unwrap()
    }

    #[test]
    fn sine_is_tracked() {
        let c = estimate_f0(&tone(200.0, 1.0), 60.0, 400.0).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.voicing_rate() > 0.9);
        for f in c.voiced() {
            assert!((f - 200.0).abs() < 2.0, "{f}");
        }
        c.validate().unwrap();
    }

    #[test]
    fn silence_and_empty() {
        let s = Waveform::silent(16000, 16000, Speaker::A);
        let c = estimate_f0(&s, 60.0, 400.0).unwrap();
        assert_eq!(c.voiced().count(), 0);
        let e = Waveform::silent(16000, 0, Speaker::A);
        assert!(estimate_f0(&e, 60.0, 400.0).unwrap().is_empty());
    }

    #[test]
    fn low_sample_rate_is_rejected() {
        let w = Waveform::silent(1000, 100, Speaker::A);
        assert!(matches!(estimate_f0(&w, 60.0, 400.0), Err(DspError::SampleRateTooLow { .. })));
    }
}
