//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use crate::{DspError, Transformed, Waveform};

const TABLE_SIZE: usize = 8192;
/// Kaiser beta for roughly 70 dB of stopband rejection.
const KAISER_BETA: f64 = 6.76;
/// Kernel half width; sets a transition band of about 100 Hz.
const HALF_WIDTH_S: f64 = 0.022;
/// Anti-alias cutoff as a fraction of the requested cutoff.
const ROLLOFF: f64 = 0.95;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Continuous-time low-pass impulse response `2 fc sinc(2 fc t)` under a
/// Kaiser window, tabulated over `[0, half_width]`.
#[derive(Debug, Clone)]
pub struct SincKernel {
    pub cutoff: f64,
    pub half_width: f64,
    table: Vec<f64>,
}

impl SincKernel {
    pub fn new(cutoff: f64, half_width: f64, beta: f64) -> Self {
        let norm = bessel_i0(beta);
        let table = (0..=TABLE_SIZE)
            .map(|i| {
                let t = half_width * i as f64 / TABLE_SIZE as f64;
                let r = t / half_width;
                let x = 2.0 * cutoff * t;
                let sinc = if x == 0.0 {
                    1.0
                } else {
                    (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
                };
                2.0 * cutoff * sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
            })
            .collect();
        SincKernel { cutoff, half_width, table }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pos = t.abs() / self.half_width * TABLE_SIZE as f64;
        if pos >= TABLE_SIZE as f64 {
            return 0.0;
        }
        let i = pos as usize;
        let a = pos - i as f64;
        self.table[i] * (1.0 - a) + self.table[i + 1] * a
    }
}

/// Evaluates the filtered signal at arbitrary `times`.
///
/// `x[i]` sits at `t0 + i / rate`; samples outside `x` count as zero.
pub fn resample(x: &[f64], rate: f64, t0: f64, times: impl Iterator<Item = f64>, kernel: &SincKernel) -> Vec<f64> {
    let hw = kernel.half_width;
    let dt = 1.0 / rate;
    times
        .map(|t| {
            let lo = (((t - hw - t0) * rate).ceil().max(0.0)) as usize;
            let hi = (((t + hw - t0) * rate).floor() + 1.0).clamp(0.0, x.len() as f64) as usize;
            (lo..hi).map(|i| x[i] * kernel.eval(t - t0 - i as f64 * dt)).sum::<f64>() * dt
        })
        .collect()
}

/// Low-passes by resampling to exactly `2 * cutoff` and back.
pub fn low_pass(wave: &Waveform, cutoff: f64) -> Result<Transformed, DspError> {
    let sr = wave.sample_rate as f64;
    if !(cutoff.is_finite() && cutoff > 0.0 && cutoff < sr / 2.0) {
        return Err(DspError::InvalidCutoff { cutoff, nyquist: sr / 2.0 });
    }
    let kernel = SincKernel::new(ROLLOFF * cutoff, HALF_WIDTH_S, KAISER_BETA);
    let mid_rate = 2.0 * cutoff;
    // the intermediate grid extends one kernel width past both ends so the
    // way back up sees the full filtered signal
    let pad = (HALF_WIDTH_S * mid_rate).ceil() as usize;
    let mid_len = (wave.duration() * mid_rate).ceil() as usize + 2 * pad + 1;
    let mid_t0 = -(pad as f64) / mid_rate;
    let mid = resample(&wave.samples, sr, 0.0, (0..mid_len).map(|m| mid_t0 + m as f64 / mid_rate), &kernel);
    let out = resample(&mid, mid_rate, mid_t0, (0..wave.len()).map(|i| i as f64 / sr), &kernel);
    Ok(Transformed::finish(wave, out, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vap_core::Speaker;

    #[test]
    fn kernel_has_unit_dc_gain() {
        let k = SincKernel::new(380.0, HALF_WIDTH_S, KAISER_BETA);
        let dt = 1.0 / 16000.0;
        let area: f64 = (-400..=400).map(|i| k.eval(i as f64 * dt)).sum::<f64>() * dt;
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn silence_stays_silent_and_length_is_kept() {
        let w = Waveform::silent(16000, 12345, Speaker::A);
        let out = low_pass(&w, 400.0).unwrap().wave;
        assert_eq!(out.len(), 12345);
        assert!(out.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cutoff_must_be_below_nyquist() {
        let w = Waveform::silent(16000, 10, Speaker::A);
        assert!(low_pass(&w, 8000.0).is_err());
        assert!(low_pass(&w, 0.0).is_err());
        assert!(low_pass(&w, f64::NAN).is_err());
    }
}
