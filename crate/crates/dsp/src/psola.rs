//! Pitch-synchronous overlap-add resynthesis.
//!
//! Analysis marks are picked on a zero-phase low-passed copy of the signal,
//! one per period as given by the contour. Synthesis marks are laid out at
//! the target period and each takes a two-period Hann grain from the
//! nearest analysis mark. Only voiced stretches with a target are replaced;
//! everything else is copied through.

use vap_core::VaSegment;

use crate::f0::F0Contour;
use crate::{DspError, Transformed, Warning, Waveform};

const CROSSFADE_S: f64 = 0.005;

/// Piecewise-linear track over frame times, held constant past the ends.
struct Track {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Track {
    fn at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&x| x <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.times.len() {
            return self.values[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let a = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - a) + self.values[i] * a
    }
}

fn zero_phase_lowpass(x: &[f64], cutoff: f64, sr: f64) -> Vec<f64> {
    let a = (-2.0 * std::f64::consts::PI * cutoff / sr).exp();
    let mut y = x.to_vec();
    let mut state = 0.0;
    for v in y.iter_mut() {
        state = (1.0 - a) * *v + a * state;
        *v = state;
    }
    state = 0.0;
    for v in y.iter_mut().rev() {
        state = (1.0 - a) * *v + a * state;
        *v = state;
    }
    y
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> Option<usize> {
    (lo..hi.min(x.len())).max_by(|&a, &b| x[a].total_cmp(&x[b]))
}

fn check_contour(wave: &Waveform, contour: &F0Contour) -> Result<(), DspError> {
    contour.validate()?;
    if let Some(last) = contour.frames.last() {
        if last.time > wave.duration() + contour.hop {
            return Err(DspError::ContourMismatch(format!(
                "contour reaches {:.3} s but the wave lasts {:.3} s",
                last.time,
                wave.duration()
            )));
        }
    }
    Ok(())
}

/// Resynthesizes every run of voiced frames that has a target F0.
///
/// `targets` has one entry per contour frame; `None` leaves that frame's
/// audio untouched.
pub fn resynthesize(wave: &Waveform, contour: &F0Contour, targets: &[Option<f64>]) -> Result<Vec<f64>, DspError> {
    check_contour(wave, contour)?;
    if targets.len() != contour.len() {
        return Err(DspError::ContourMismatch(format!(
            "{} targets for {} frames",
            targets.len(),
            contour.len()
        )));
    }
    if let Some(t) = targets.iter().flatten().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(DspError::InvalidParameter(format!("target f0 {t} must be positive")));
    }
    let mut out = wave.samples.clone();
    let sr = wave.sample_rate as f64;
    let active: Vec<bool> =
        contour.frames.iter().zip(targets).map(|(f, t)| f.f0.is_some() && t.is_some()).collect();
    if !active.iter().any(|&a| a) {
        return Ok(out);
    }
    let lp = zero_phase_lowpass(&wave.samples, contour.f0_max, sr);

    let mut k = 0;
    while k < active.len() {
        if !active[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k < active.len() && active[k] {
            k += 1;
        }
        let run = first..k;
        let analysis = Track {
            times: run.clone().map(|i| contour.frames[i].time).collect(),
            values: run.clone().map(|i| contour.frames[i].f0.unwrap()).collect(),
        };
        let target = Track {
            times: analysis.times.clone(),
            values: run.clone().map(|i| targets[i].unwrap()).collect(),
        };
        let half_hop = 0.5 * contour.hop;
        let span = (
            wave.index_at(contour.frames[first].time - half_hop),
            wave.index_at(contour.frames[k - 1].time + half_hop),
        );
        if span.1 > span.0 {
            replace_run(&wave.samples, &lp, sr, &analysis, &target, span, &mut out);
        }
    }
    Ok(out)
}

fn replace_run(
    x: &[f64],
    lp: &[f64],
    sr: f64,
    analysis: &Track,
    target: &Track,
    span: (usize, usize),
    out: &mut [f64],
) {
    let n = x.len();
    let period = |pos: f64| sr / analysis.at(pos / sr);
    let new_period = |pos: f64| sr / target.at(pos / sr);
    let lo_limit = (span.0 as f64 - 2.0 * period(span.0 as f64)).max(0.0);
    let hi_limit = (span.1 as f64 + 2.0 * period(span.1 as f64)).min((n - 1) as f64);

    // analysis marks, seeded inside the first period of the span
    let p0 = period(span.0 as f64);
    let Some(seed) = argmax(lp, span.0, span.0 + p0.ceil() as usize) else { return };
    let mut back = Vec::new();
    let mut m = seed;
    loop {
        let p = period(m as f64);
        let hi = m as f64 - 0.8 * p;
        if hi < lo_limit {
            break;
        }
        let lo = (m as f64 - 1.2 * p).max(0.0);
        match argmax(lp, lo as usize, hi as usize + 1) {
            Some(c) if c < m => {
                back.push(c);
                m = c;
            }
            _ => break,
        }
    }
    back.reverse();
    let mut marks = back;
    marks.push(seed);
    let mut m = seed;
    loop {
        let p = period(m as f64);
        let lo = m as f64 + 0.8 * p;
        if lo > hi_limit {
            break;
        }
        let hi = m as f64 + 1.2 * p;
        match argmax(lp, lo.ceil() as usize, hi as usize + 1) {
            Some(c) if c > m => {
                marks.push(c);
                m = c;
            }
            _ => break,
        }
    }

    // local overlap-add buffer over [base, base + len)
    let margin = (2.0 * sr / analysis.values.iter().cloned().fold(f64::INFINITY, f64::min)).ceil() as usize + 2;
    let base = marks[0].saturating_sub(margin);
    let end = (hi_limit as usize + 2 * margin).min(n);
    let mut buf = vec![0.0; end - base];

    let mut s = marks[0] as f64;
    while s <= hi_limit {
        let si = s.round() as usize;
        let j = marks.partition_point(|&a| a < si);
        let a = match (j.checked_sub(1), marks.get(j)) {
            (Some(i), Some(&b)) => {
                if si - marks[i] <= b - si {
                    marks[i]
                } else {
                    b
                }
            }
            (Some(i), None) => marks[i],
            (None, Some(&b)) => b,
            (None, None) => break,
        };
        let pa = period(a as f64);
        let ps = new_period(s);
        let half = pa.round().max(1.0) as isize;
        let scale = (ps / pa).clamp(0.5, 2.0);
        for i in -half..=half {
            let src = a as isize + i;
            let dst = si as isize + i;
            if src < 0 || src as usize >= n || dst < base as isize || dst as usize >= end {
                continue;
            }
            let w = 0.5 * (1.0 + (std::f64::consts::PI * i as f64 / half as f64).cos());
            buf[dst as usize - base] += scale * w * x[src as usize];
        }
        s += ps;
    }

    let xfade = (CROSSFADE_S * sr).max(1.0);
    for (i, o) in out.iter_mut().enumerate().take(span.1).skip(span.0) {
        let ramp = ((i - span.0) as f64 + 0.5).min((span.1 - i) as f64 - 0.5) / xfade;
        let w = ramp.clamp(0.0, 1.0);
        let y = if i >= base && i < end { buf[i - base] } else { x[i] };
        *o = (1.0 - w) * x[i] + w * y;
    }
}

/// Flattens the intonation of each of the wave speaker's VA segments to the
/// segment's mean voiced F0 (in Hz).
pub fn flatten_f0(wave: &Waveform, contour: &F0Contour, va: &[VaSegment]) -> Result<Transformed, DspError> {
    check_contour(wave, contour)?;
    let mut targets = vec![None; contour.len()];
    let mut warnings = Vec::new();
    for seg in va.iter().filter(|s| s.speaker == wave.speaker) {
        let idx: Vec<usize> = (0..contour.len())
            .filter(|&i| contour.frames[i].time >= seg.start && contour.frames[i].time < seg.end)
            .collect();
        let voiced: Vec<f64> = idx.iter().filter_map(|&i| contour.frames[i].f0).collect();
        if voiced.is_empty() {
            warnings.push(Warning::NoVoicedFrames { start: seg.start, end: seg.end });
            continue;
        }
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        for i in idx {
            targets[i] = Some(mean);
        }
    }
    let out = resynthesize(wave, contour, &targets)?;
    Ok(Transformed::finish(wave, out, warnings))
}

/// Scales the whole contour by `factor`.
pub fn shift_f0(wave: &Waveform, contour: &F0Contour, factor: f64) -> Result<Transformed, DspError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(DspError::InvalidParameter(format!("shift factor {factor} must be positive")));
    }
    check_contour(wave, contour)?;
    let targets: Vec<Option<f64>> = contour.frames.iter().map(|f| f.f0.map(|v| v * factor)).collect();
    if targets.iter().all(Option::is_none) {
        let warn = Warning::NoVoicedFrames { start: 0.0, end: wave.duration() };
        return Ok(Transformed::unchanged(wave, vec![warn]));
    }
    let out = resynthesize(wave, contour, &targets)?;
    Ok(Transformed::finish(wave, out, Vec::new()))
}
