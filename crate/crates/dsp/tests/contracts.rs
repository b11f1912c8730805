//! Transform contracts checked by measuring the outputs independently:
//! tone levels with an FFT, pitch by re-running the estimator.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use vap_core::{Speaker, VaSegment};
use vap_dsp::{
    estimate_f0, flatten_f0, flatten_intensity, frame_rms, low_pass, scale_durations, shift_f0, F0Contour, Phone,
    PhoneAlignment, Warning, Waveform,
};

const SR: f64 = 16000.0;

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(16000, samples, Speaker::A).unwrap()
}

/// Harmonic tone following `f0(t)`, amplitude 0.5.
fn voiced(f0: impl Fn(f64) -> f64, secs: f64) -> Vec<f64> {
    let mut phase = 0.0;
    (0..(secs * SR) as usize)
        .map(|i| {
            phase += 2.0 * PI * f0(i as f64 / SR) / SR;
            0.35 * phase.sin() + 0.1 * (2.0 * phase).sin() + 0.05 * (3.0 * phase).sin()
        })
        .collect()
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Amplitude of the strongest bin near `freq`, Hann-windowed.
fn tone_level(x: &[f64], freq: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex::new(v * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin = (freq * n as f64 / SR).round() as usize;
    (bin - 2..=bin + 2).map(|k| buf[k].norm()).fold(0.0, f64::max)
}

fn db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

fn sine(freq: f64, secs: f64) -> Vec<f64> {
    (0..(secs * SR) as usize).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / SR).sin()).collect()
}

fn lowpass_gain_db(freq: f64) -> f64 {
    // measure over the middle second to keep edge transients out
    let x = sine(freq, 2.0);
    let y = low_pass(&wave(x.clone()), 400.0).unwrap().wave.samples;
    assert_eq!(y.len(), x.len());
    db(tone_level(&y[8000..24000], freq) / tone_level(&x[8000..24000], freq))
}

#[test]
fn low_pass_keeps_the_passband() {
    for f in [100.0, 200.0, 300.0, 320.0] {
        let g = lowpass_gain_db(f);
        assert!(g.abs() < 1.0, "{f} Hz: {g:.2} dB");
    }
}

#[test]
fn low_pass_rejects_the_stopband() {
    for f in [500.0, 700.0, 1000.0, 3000.0] {
        let g = lowpass_gain_db(f);
        assert!(g <= -40.0, "{f} Hz: {g:.2} dB");
    }
}

#[test]
fn estimator_on_noise_is_mostly_unvoiced() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = Normal::<f64>::new(0.0, 0.2).unwrap();
    let x: Vec<f64> = (0..32000).map(|_| n.sample(&mut rng).clamp(-1.0, 1.0)).collect();
    let c = estimate_f0(&wave(x), 60.0, 400.0).unwrap();
    assert!(1.0 - c.voicing_rate() >= 0.9, "voicing {}", c.voicing_rate());
}

fn interior(c: &F0Contour, start: f64, end: f64) -> Vec<f64> {
    c.voiced_in(start, end)
}

#[test]
fn flattening_a_glide() {
    let x = voiced(|t| 150.0 + 100.0 * t, 1.0);
    let w = wave(x);
    let c = estimate_f0(&w, 60.0, 400.0).unwrap();
    let out = flatten_f0(&w, &c, &[VaSegment::new(Speaker::A, 0.0, 1.0)]).unwrap();
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
    assert_eq!(out.wave.len(), w.len());
    let f = interior(&estimate_f0(&out.wave, 60.0, 400.0).unwrap(), 0.05, 0.95);
    assert!(f.len() > 70);
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    assert!(std_dev(&f) < 5.0, "std {}", std_dev(&f));
    assert!((mean - 200.0).abs() < 5.0, "mean {mean}");
}

#[test]
fn flattening_is_per_segment() {
    let mut x = voiced(|t| 120.0 + 20.0 * (2.0 * PI * 3.0 * t).sin(), 0.8);
    x.extend(vec![0.0; 3200]);
    x.extend(voiced(|t| 180.0 + 25.0 * (2.0 * PI * 2.0 * t).sin(), 0.8));
    let w = wave(x);
    let va = [VaSegment::new(Speaker::A, 0.0, 0.8), VaSegment::new(Speaker::A, 1.0, 1.8)];
    let c = estimate_f0(&w, 60.0, 400.0).unwrap();
    let out = flatten_f0(&w, &c, &va).unwrap().wave;
    let oc = estimate_f0(&out, 60.0, 400.0).unwrap();
    let mut means = Vec::new();
    for seg in &va {
        // target is the input's own mean over the segment
        let src = c.voiced_in(seg.start, seg.end);
        let target = src.iter().sum::<f64>() / src.len() as f64;
        let inner = interior(&oc, seg.start + 0.05, seg.end - 0.05);
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        assert!((mean - target).abs() < 4.0, "segment {seg:?}: {mean}");
        assert!(std_dev(&inner) < 5.0, "segment {seg:?}: std {}", std_dev(&inner));
        means.push(mean);
    }
    assert!((means[0] - 120.0).abs() < 5.0 && (means[1] - 180.0).abs() < 7.0, "{means:?}");
}

#[test]
fn unvoiced_input_passes_through_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::<f64>::new(0.0, 0.1).unwrap();
    let x: Vec<f64> = (0..16000).map(|_| n.sample(&mut rng)).collect();
    let w = wave(x);
    let mut c = estimate_f0(&w, 60.0, 400.0).unwrap();
    c.frames.iter_mut().for_each(|f| f.f0 = None);
    let va = [VaSegment::new(Speaker::A, 0.0, 1.0)];
    let out = flatten_f0(&w, &c, &va).unwrap();
    assert_eq!(out.wave, w);
    assert_eq!(out.warnings, vec![Warning::NoVoicedFrames { start: 0.0, end: 1.0 }]);
    let shifted = shift_f0(&w, &c, 0.9).unwrap();
    assert_eq!(shifted.wave, w);
}

#[test]
fn shift_identity_and_ninety_percent() {
    let w = wave(voiced(|_| 200.0, 1.0));
    let c = estimate_f0(&w, 60.0, 400.0).unwrap();
    let same = estimate_f0(&shift_f0(&w, &c, 1.0).unwrap().wave, 60.0, 400.0).unwrap();
    for (a, b) in c.frames.iter().zip(&same.frames).filter(|(a, _)| a.time > 0.05 && a.time < 0.95) {
        let (Some(a), Some(b)) = (a.f0, b.f0) else { panic!("voicing lost at {}", a.time) };
        assert!((a - b).abs() < 2.0);
    }
    let out = estimate_f0(&shift_f0(&w, &c, 0.9).unwrap().wave, 60.0, 400.0).unwrap();
    let ratio = out.median_voiced().unwrap() / c.median_voiced().unwrap();
    assert!((ratio - 0.9).abs() < 0.03, "ratio {ratio}");
    assert!((out.median_voiced().unwrap() - 180.0).abs() < 3.0);
}

#[test]
fn halving_a_glide_halves_every_frame() {
    let w = wave(voiced(|t| 160.0 + 80.0 * t, 1.0));
    let c = estimate_f0(&w, 60.0, 400.0).unwrap();
    let out = estimate_f0(&shift_f0(&w, &c, 0.5).unwrap().wave, 60.0, 400.0).unwrap();
    let mut checked = 0;
    for (fa, fb) in c.frames.iter().zip(&out.frames).filter(|(a, _)| a.time > 0.05 && a.time < 0.95) {
        if let (Some(a), Some(b)) = (fa.f0, fb.f0) {
            let r = b / a;
            assert!((r - 0.5).abs() <= 0.015, "frame at {:.2}: {a:.1} -> {b:.1}", fa.time);
            checked += 1;
        }
    }
    assert!(checked > 70, "only {checked} frames voiced in both");
}

#[test]
fn intensity_halves_meet_in_the_middle() {
    let mut x: Vec<f64> = sine(220.0, 2.0);
    let s = 0.1 * 2f64.sqrt() / 0.5;
    for (i, v) in x.iter_mut().enumerate() {
        *v *= if i < 16000 { s } else { 2.0 * s };
    }
    let w = wave(x);
    let va = [VaSegment::new(Speaker::A, 0.0, 2.0)];
    let before = frame_rms(&w.samples, 160);
    let out = flatten_intensity(&w, &va).unwrap();
    let after = frame_rms(&out.wave.samples, 160);
    let (b, a) = (before, after);
    assert!((a[50] - 0.15).abs() < 0.005 && (a[150] - 0.15).abs() < 0.005, "{} {}", a[50], a[150]);
    assert!(std_dev(&a) <= 0.2 * std_dev(&b), "{} vs {}", std_dev(&a), std_dev(&b));
}

#[test]
fn constant_intensity_is_left_alone() {
    let w = wave(sine(200.0, 1.0));
    let out = flatten_intensity(&w, &[VaSegment::new(Speaker::A, 0.0, 1.0)]).unwrap();
    for (x, y) in w.samples.iter().zip(&out.wave.samples) {
        assert!((x - y).abs() < 1e-3 * 0.5);
    }
}

#[test]
fn breaths_are_boosted_up_to_the_clamp() {
    let mut x = sine(200.0, 1.0);
    x.iter_mut().for_each(|v| *v *= 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = Normal::<f64>::new(0.0, 0.001).unwrap();
    x.extend((0..4000).map(|_| n.sample(&mut rng)));
    x.extend(vec![0.0; 800]);
    let w = wave(x);
    let out = flatten_intensity(&w, &[VaSegment::new(Speaker::A, 0.0, 1.3)]).unwrap();
    let before = frame_rms(&w.samples, 160);
    let after = frame_rms(&out.wave.samples, 160);
    // interior breath frames rise by exactly the 20 dB clamp
    for k in 103..122 {
        let g = db(after[k] / before[k]);
        assert!((g - 20.0).abs() < 0.01, "frame {k}: {g:.2} dB");
    }
    assert!(out.warnings.contains(&Warning::ZeroEnergyFrames { frames: 5 }), "{:?}", out.warnings);
    assert!(out.warnings.iter().any(|w| matches!(w, Warning::GainClamped { frames } if *frames >= 25)));
}

fn alignment(spec: &[(&str, f64, f64)]) -> PhoneAlignment {
    PhoneAlignment::new(spec.iter().map(|&(l, s, e)| Phone { label: l.into(), start: s, end: e }).collect())
        .unwrap()
}

#[test]
fn durations_at_their_means_are_kept() {
    let w = wave(voiced(|_| 150.0, 1.0));
    let al = alignment(&[("a", 0.0, 0.3), ("b", 0.3, 0.6), ("c", 0.6, 1.0)]);
    let means = BTreeMap::from([("a".into(), 0.3), ("b".into(), 0.3), ("c".into(), 0.4)]);
    let out = scale_durations(&w, &al, &means).unwrap().wave;
    assert!((out.duration() - 1.0).abs() <= 0.03);
    let f = estimate_f0(&out, 60.0, 400.0).unwrap().median_voiced().unwrap();
    assert!((f - 150.0).abs() < 2.0);
}

#[test]
fn one_phone_is_compressed_twofold() {
    let mut x = voiced(|_| 150.0, 0.4);
    x.extend(voiced(|_| 300.0, 0.2));
    x.extend(voiced(|_| 150.0, 0.4));
    let w = wave(x);
    let al = alignment(&[("a", 0.0, 0.4), ("b", 0.4, 0.6), ("c", 0.6, 1.0)]);
    let means = BTreeMap::from([("a".into(), 0.4), ("b".into(), 0.1), ("c".into(), 0.4)]);
    let out = scale_durations(&w, &al, &means).unwrap().wave;
    assert!((out.duration() - 0.9).abs() <= 0.03);
    let c = estimate_f0(&out, 60.0, 400.0).unwrap();
    let high: Vec<f64> = c.voiced().filter(|f| *f > 225.0).collect();
    let span = high.len() as f64 * c.hop;
    assert!((span - 0.1).abs() <= 0.04, "300 Hz span lasts {span:.3} s");
    // pitch inside each part stays within 5 %
    assert!((median(high) / 300.0 - 1.0).abs() < 0.05);
    let low: Vec<f64> = c.voiced().filter(|f| *f < 225.0).collect();
    assert!((median(low) / 150.0 - 1.0).abs() < 0.05);
}

#[test]
fn low_pass_after_flattening_stays_flat() {
    let w = wave(voiced(|t| 150.0 + 100.0 * t, 1.0));
    let c = estimate_f0(&w, 60.0, 400.0).unwrap();
    let flat = flatten_f0(&w, &c, &[VaSegment::new(Speaker::A, 0.0, 1.0)]).unwrap().wave;
    let both = low_pass(&flat, 400.0).unwrap().wave;
    let f = interior(&estimate_f0(&both, 60.0, 400.0).unwrap(), 0.05, 0.95);
    assert!(f.len() > 70);
    assert!(std_dev(&f) < 5.0, "std {}", std_dev(&f));
}
