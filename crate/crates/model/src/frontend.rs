//! Turning voice activity, audio or precomputed embeddings into model inputs.

use std::ops::Range;

use ndarray::{s, Array2, NdFloat};
use rustfft::{num_complex::Complex, FftPlanner};
use vap_core::va::va_history_all;
use vap_core::VaGrid;

use crate::model::{HISTORY_DIMS, VA_DIMS};
use crate::{Frontend, ModelConfig, ModelError};

/// Raw per-frame inputs of one sequence.
///
/// `speech` holds `frames * stride` rows at the frontend's source rate;
/// `va` and `history` hold one row per model frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<F> {
    pub speech: Array2<F>,
    pub va: Array2<F>,
    pub history: Array2<F>,
}

impl<F: NdFloat> Features<F> {
    pub fn frames(&self) -> usize {
        self.va.nrows()
    }

    pub fn check(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let t = self.frames();
        let k = config.stride();
        let dims = config.frontend.speech_dims();
        let shape = |m: String| Err(ModelError::Shape(m));
        if self.va.ncols() != VA_DIMS || self.history.dim() != (t, HISTORY_DIMS) {
            return shape(format!(
                "va {:?} / history {:?} for {t} frames",
                self.va.dim(),
                self.history.dim()
            ));
        }
        if self.speech.dim() != (t * k, dims) {
            return shape(format!(
                "speech inputs {:?}, expected ({}, {dims}) for {t} frames at stride {k}",
                self.speech.dim(),
                t * k
            ));
        }
        Ok(())
    }

    /// Speech rows folded `stride` at a time, `[T x stride*dims]`; this is
    /// a convolution with kernel = stride once multiplied by the projection.
    pub fn strided_speech(&self, stride: usize) -> Array2<F> {
        let t = self.frames();
        let dims = self.speech.ncols();
        let flat: Vec<F> = self.speech.iter().cloned().collect();
        Array2::from_shape_vec((t, stride * dims), flat).expect("rows checked against frames")
    }

    pub fn slice(&self, frames: Range<usize>, stride: usize) -> Features<F> {
        Features {
            speech: self.speech.slice(s![frames.start * stride..frames.end * stride, ..]).to_owned(),
            va: self.va.slice(s![frames.clone(), ..]).to_owned(),
            history: self.history.slice(s![frames, ..]).to_owned(),
        }
    }

    pub fn cast<G: NdFloat>(&self) -> Features<G> {
        let c = |a: &Array2<F>| a.mapv(|v| G::from(v).expect("finite"));
        Features { speech: c(&self.speech), va: c(&self.va), history: c(&self.history) }
    }
}

/// Current activity and history features for every frame of `grid`.
pub fn va_channels(grid: &VaGrid) -> (Array2<f32>, Array2<f32>) {
    let t = grid.len();
    let va = Array2::from_shape_fn((t, VA_DIMS), |(i, s)| {
        let row = if s == 0 { grid.row(vap_core::Speaker::A) } else { grid.row(vap_core::Speaker::B) };
        row[i] as u8 as f32
    });
    let hist = va_history_all(grid);
    let history = Array2::from_shape_fn((t, HISTORY_DIMS), |(i, k)| hist[i].ratios[k] as f32);
    (va, history)
}

/// Inputs accepted by [`frontend`].
pub enum FrontendInput<'a> {
    /// Voice activity plus optional extra channels, one row per frame.
    VaOnly { grid: &'a VaGrid, extra: Option<Array2<f32>> },
    /// Mono mix of both speakers.
    Audio { grid: &'a VaGrid, samples: &'a [f64], sample_rate: u32 },
    /// Embeddings at the 100 Hz source rate.
    Embeddings { grid: &'a VaGrid, rows: Array2<f32> },
}

fn check_finite(x: &Array2<f32>, what: &str) -> Result<(), ModelError> {
    match x.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(ModelError::Shape(format!("{what} value {i} is not finite"))),
    }
}

pub fn frontend(input: FrontendInput<'_>, config: &ModelConfig) -> Result<Features<f32>, ModelError> {
    config.validate()?;
    let (grid, speech) = match (input, config.frontend) {
        (FrontendInput::VaOnly { grid, extra }, Frontend::VaOnly { extra_dims }) => {
            let extra = extra.unwrap_or_else(|| Array2::zeros((grid.len(), 0)));
            if extra.dim() != (grid.len(), extra_dims) {
                return Err(ModelError::Shape(format!(
                    "extra channels {:?}, expected ({}, {extra_dims})",
                    extra.dim(),
                    grid.len()
                )));
            }
            (grid, extra)
        }
        (FrontendInput::Audio { grid, samples, sample_rate }, Frontend::LogMel { mels }) => {
            (grid, log_mel(samples, sample_rate, mels)?)
        }
        (FrontendInput::Embeddings { grid, rows }, Frontend::ExternalEmbeddings { dims }) => {
            if rows.ncols() != dims {
                return Err(ModelError::Shape(format!("embeddings have {} dims, expected {dims}", rows.ncols())));
            }
            (grid, rows)
        }
        (_, f) => return Err(ModelError::Shape(format!("input does not match the {f:?} frontend"))),
    };
    check_finite(&speech, "speech input")?;
    if grid.frame_rate() != config.frame_rate {
        return Err(ModelError::Shape(format!(
            "VA grid at {} Hz, model at {} Hz",
            grid.frame_rate().hz(),
            config.frame_rate.hz()
        )));
    }
    let k = config.stride();
    let from_speech = speech.nrows() / k;
    // audio and annotation lengths may disagree by a rounding frame
    if from_speech.abs_diff(grid.len()) > 1 {
        return Err(ModelError::Shape(format!(
            "{} speech rows give {from_speech} frames at stride {k}, VA grid has {}",
            speech.nrows(),
            grid.len()
        )));
    }
    let t = from_speech.min(grid.len());
    let (va, history) = va_channels(grid);
    Ok(Features {
        speech: speech.slice(s![..t * k, ..]).to_owned(),
        va: va.slice(s![..t, ..]).to_owned(),
        history: history.slice(s![..t, ..]).to_owned(),
    })
}

const MEL_WINDOW_S: f64 = 0.025;
const MEL_HOP_S: f64 = 0.01;
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Log-mel filterbank energies at 100 Hz, one frame centered on every
/// 10 ms tick.
pub fn log_mel(samples: &[f64], sample_rate: u32, mels: usize) -> Result<Array2<f32>, ModelError> {
    if sample_rate % 100 != 0 || sample_rate == 0 {
        return Err(ModelError::Shape(format!("sample rate {sample_rate} Hz is not a multiple of 100")));
    }
    if mels == 0 {
        return Err(ModelError::InvalidConfig("log-mel needs at least one band".into()));
    }
    let sr = sample_rate as f64;
    let win = (MEL_WINDOW_S * sr).round() as usize;
    let hop = (MEL_HOP_S * sr).round() as usize;
    let nfft = win.next_power_of_two();
    let frames = samples.len().div_ceil(hop);
    let window: Vec<f64> =
        (0..win).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()).collect();

    // triangular filters evenly spaced on the mel scale up to Nyquist
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..mels + 2).map(|i| mel_to_hz(top * i as f64 / (mels + 1) as f64)).collect();
    let bin_hz = sr / nfft as f64;
    let filters: Vec<Vec<(usize, f64)>> = (0..mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=nfft / 2)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut out = Array2::zeros((frames, mels));
    for t in 0..frames {
        let start = (t * hop) as isize - (win / 2) as isize;
        for (i, c) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let v = if i < win && idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] * window[i]
            } else {
                0.0
            };
            *c = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (m, filt) in filters.iter().enumerate() {
            let e: f64 = filt.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
            out[[t, m]] = e.max(LOG_FLOOR).ln() as f32;
        }
    }
    Ok(out)
}

/// Segment spans over `total` frames: `context` frames long, consecutive
/// spans sharing `overlap` frames. The second field is the number of
/// leading frames already covered by the previous span.
pub fn segment_spans(total: usize, context: usize, overlap: usize) -> Vec<(Range<usize>, usize)> {
    let mut spans = Vec::new();
    if total == 0 || context == 0 {
        return spans;
    }
    let step = context.saturating_sub(overlap).max(1);
    let mut start = 0;
    loop {
        let end = (start + context).min(total);
        spans.push((start..end, if start == 0 { 0 } else { overlap.min(end - start) }));
        if end == total {
            break;
        }
        start += step;
    }
    spans
}
