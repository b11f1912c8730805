//! Zero-shot turn-taking classification from projection distributions.
//!
//! A model emits, per frame, a distribution over the 256 projection classes.
//! Event probabilities are sums of that distribution over class subsets
//! chosen by [`AggregationConfig`]:
//!
//! * next-speaker evidence for speaker `s` is the mass of classes where `s`
//!   is active in every `shift_bins` bin and the other speaker in none;
//! * backchannel probability for a listener is the mass of classes where the
//!   listener is active in at least one `bc_active_bins` bin and silent in
//!   every `bc_silent_bins` bin.
//!
//! Event-level scores average the frame probabilities over the event span
//! and are thresholded; tasks are scored with support-weighted F1.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventSet, GapLabel, Polarity, PredictionRegion};
use crate::va::{FrameRate, ProjectionLabel, Speaker, NUM_CLASSES};

const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ZeroShotError {
    #[error("distribution has {0} entries, expected 256")]
    WrongLength(usize),
    #[error("distribution is not on the simplex (sum {sum}, min {min})")]
    NotNormalized { sum: f64, min: f64 },
    #[error("invalid aggregation config: {0}")]
    InvalidConfig(String),
    #[error("frame rate mismatch: events at {events}, probabilities at {probs}")]
    FrameRateMismatch { events: FrameRate, probs: FrameRate },
    #[error("event frames {start}..{end} exceed probability sequence of {len} frames")]
    MissingFrames { start: usize, end: usize, len: usize },
    #[error("{0} region has zero length")]
    EmptyRegion(&'static str),
    #[error("{0}")]
    InvalidQuery(String),
}

pub type Result<T, E = ZeroShotError> = std::result::Result<T, E>;

/// Per-frame distributions over the projection classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSequence {
    frame_rate: FrameRate,
    probs: Vec<f64>,
}

fn check_simplex(dist: &[f64]) -> Result<()> {
    if dist.len() != NUM_CLASSES {
        return Err(ZeroShotError::WrongLength(dist.len()));
    }
    let sum: f64 = dist.iter().sum();
    let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
    if !sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOL || min < 0.0 || min.is_nan() {
        return Err(ZeroShotError::NotNormalized { sum, min });
    }
    Ok(())
}

impl ProbSequence {
    /// Builds a sequence from row-major `[T x 256]` probabilities, checking
    /// every row.
    pub fn new(frame_rate: FrameRate, probs: Vec<f64>) -> Result<Self> {
        if probs.len() % NUM_CLASSES != 0 {
            return Err(ZeroShotError::WrongLength(probs.len() % NUM_CLASSES));
        }
        for row in probs.chunks(NUM_CLASSES) {
            check_simplex(row)?;
        }
        Ok(ProbSequence { frame_rate, probs })
    }

    /// Softmax over row-major `[T x 256]` logits.
    pub fn from_logits(frame_rate: FrameRate, logits: &[f64]) -> Result<Self> {
        if logits.len() % NUM_CLASSES != 0 {
            return Err(ZeroShotError::WrongLength(logits.len() % NUM_CLASSES));
        }
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(NUM_CLASSES) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = probs.len();
            probs.extend(row.iter().map(|&z| (z - max).exp()));
            let total: f64 = probs[start..].iter().sum();
            probs[start..].iter_mut().for_each(|p| *p /= total);
        }
        ProbSequence::new(frame_rate, probs)
    }

    pub fn frame_rate(&self) -> FrameRate {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.probs.len() / NUM_CLASSES
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.probs[t * NUM_CLASSES..(t + 1) * NUM_CLASSES]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(NUM_CLASSES)
    }
}

/// Which projection bins (1-based) feed each zero-shot probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub shift_bins: Vec<usize>,
    pub bc_active_bins: Vec<usize>,
    pub bc_silent_bins: Vec<usize>,
    pub threshold: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            shift_bins: vec![3, 4],
            bc_active_bins: vec![1, 2],
            bc_silent_bins: vec![3, 4],
            threshold: 0.5,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, bins) in [
            ("shift_bins", &self.shift_bins),
            ("bc_active_bins", &self.bc_active_bins),
            ("bc_silent_bins", &self.bc_silent_bins),
        ] {
            if bins.is_empty() {
                return Err(ZeroShotError::InvalidConfig(format!("{name} is empty")));
            }
            if let Some(b) = bins.iter().find(|&&b| !(1..=4).contains(&b)) {
                return Err(ZeroShotError::InvalidConfig(format!("{name} contains bin {b}")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ZeroShotError::InvalidConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    /// Classes counted as next-speaker evidence for `speaker`.
    pub fn next_speaker_classes(&self, speaker: Speaker) -> Vec<usize> {
        classes_where(|l| {
            self.shift_bins
                .iter()
                .all(|&b| l.bin(speaker, b) && !l.bin(speaker.other(), b))
        })
    }

    /// Classes counted as an upcoming backchannel from `listener`.
    pub fn backchannel_classes(&self, listener: Speaker) -> Vec<usize> {
        classes_where(|l| {
            self.bc_active_bins.iter().any(|&b| l.bin(listener, b))
                && self.bc_silent_bins.iter().all(|&b| !l.bin(listener, b))
        })
    }
}

fn classes_where(pred: impl Fn(&ProjectionLabel) -> bool) -> Vec<usize> {
    (0..NUM_CLASSES)
        .filter(|&c| pred(&ProjectionLabel::decode(c).expect("class in range")))
        .collect()
}

/// Precomputed class subsets for repeated aggregation.
#[derive(Debug, Clone)]
pub struct Aggregator {
    config: AggregationConfig,
    next: [Vec<usize>; 2],
    bc: [Vec<usize>; 2],
}

impl Aggregator {
    pub fn new(config: &AggregationConfig) -> Result<Self> {
        config.validate()?;
        Ok(Aggregator {
            config: config.clone(),
            next: [
                config.next_speaker_classes(Speaker::A),
                config.next_speaker_classes(Speaker::B),
            ],
            bc: [config.backchannel_classes(Speaker::A), config.backchannel_classes(Speaker::B)],
        })
    }

    pub fn config(&self) -> &AggregationConfig {
        &self.config
    }

    fn mass(dist: &[f64], classes: &[usize]) -> f64 {
        classes.iter().map(|&c| dist[c]).sum()
    }

    pub fn next_speaker(&self, dist: &[f64]) -> Result<(f64, f64)> {
        check_simplex(dist)?;
        let a = Self::mass(dist, &self.next[0]);
        let b = Self::mass(dist, &self.next[1]);
        let total = a + b;
        if total <= 0.0 {
            return Ok((0.5, 0.5));
        }
        Ok((a / total, b / total))
    }

    /// Probability that the turn passes from `prev` to the other speaker.
    pub fn shift(&self, dist: &[f64], prev: Speaker) -> Result<f64> {
        let (pa, pb) = self.next_speaker(dist)?;
        Ok(match prev {
            Speaker::A => pb,
            Speaker::B => pa,
        })
    }

    pub fn backchannel(&self, dist: &[f64], listener: Speaker) -> Result<f64> {
        check_simplex(dist)?;
        Ok(Self::mass(dist, &self.bc[listener.index()]).clamp(0.0, 1.0))
    }
}

/// Normalized next-speaker evidence `(pA, pB)`; `(0.5, 0.5)` when neither
/// speaker has any evidence.
pub fn next_speaker_prob(dist: &[f64], config: &AggregationConfig) -> Result<(f64, f64)> {
    Aggregator::new(config)?.next_speaker(dist)
}

pub fn shift_probability(dist: &[f64], prev: Speaker, config: &AggregationConfig) -> Result<f64> {
    Aggregator::new(config)?.shift(dist, prev)
}

pub fn bc_prediction_prob(dist: &[f64], listener: Speaker, config: &AggregationConfig) -> Result<f64> {
    Aggregator::new(config)?.backchannel(dist, listener)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    ShiftHold,
    ShiftPrediction,
    BcPrediction,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ShiftHold, Metric::ShiftPrediction, Metric::BcPrediction];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ShiftHold => "shift_hold",
            Metric::ShiftPrediction => "shift_prediction",
            Metric::BcPrediction => "bc_prediction",
        }
    }

    /// Names of the positive and negative class.
    pub fn class_names(self) -> (&'static str, &'static str) {
        match self {
            Metric::ShiftHold => ("shift", "hold"),
            Metric::ShiftPrediction => ("shift", "no_shift"),
            Metric::BcPrediction => ("backchannel", "no_backchannel"),
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Binary confusion counts with the positive class as defined by the metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, label: bool, decision: bool) {
        match (label, decision) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    fn stats(tp: usize, fp: usize, fn_: usize) -> ClassStats {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassStats { precision, recall, f1, support: tp + fn_ }
    }

    pub fn positive_stats(&self) -> ClassStats {
        Self::stats(self.tp, self.fp, self.fn_)
    }

    pub fn negative_stats(&self) -> ClassStats {
        Self::stats(self.tn, self.fn_, self.fp)
    }

    /// Support-weighted mean of the two per-class F1 scores.
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let (p, n) = (self.positive_stats(), self.negative_stats());
        (p.f1 * p.support as f64 + n.f1 * n.support as f64) / total as f64
    }

    /// The always-majority classifier on the same labels (ties go to the
    /// negative class; the score is the same either way).
    pub fn majority_baseline(&self) -> Confusion {
        let (pos, neg) = (self.positives(), self.negatives());
        if pos > neg {
            Confusion { tp: pos, fp: neg, tn: 0, fn_: 0 }
        } else {
            Confusion { tp: 0, fp: 0, tn: neg, fn_: pos }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub weighted_f1: f64,
    pub baseline_weighted_f1: f64,
    pub positive: ClassStats,
    pub negative: ClassStats,
    pub confusion: Confusion,
    pub threshold: f64,
}

impl EvalReport {
    pub fn from_confusion(metric: Metric, confusion: Confusion, threshold: f64) -> Self {
        EvalReport {
            metric,
            weighted_f1: confusion.weighted_f1(),
            baseline_weighted_f1: confusion.majority_baseline().weighted_f1(),
            positive: confusion.positive_stats(),
            negative: confusion.negative_stats(),
            confusion,
            threshold,
        }
    }

    pub fn from_scores(metric: Metric, scores: &[EventScore], threshold: f64) -> Self {
        let mut confusion = Confusion::default();
        for s in scores {
            confusion.add(s.label, s.decision);
        }
        EvalReport::from_confusion(metric, confusion, threshold)
    }
}

/// One scored event, ready for CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub event_id: usize,
    pub kind: Metric,
    /// True for the positive class (Shift, upcoming Shift, upcoming BC).
    pub label: bool,
    pub score: f64,
    pub decision: bool,
}

fn mean_over(
    probs: &ProbSequence,
    frames: &std::ops::Range<usize>,
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if frames.is_empty() || frames.end > probs.len() {
        return Err(ZeroShotError::MissingFrames {
            start: frames.start,
            end: frames.end,
            len: probs.len(),
        });
    }
    let mut total = 0.0;
    for t in frames.clone() {
        total += f(probs.row(t))?;
    }
    Ok(total / frames.len() as f64)
}

/// Scores every event of one task by averaging its frame probabilities.
pub fn score_events(
    events: &EventSet,
    probs: &ProbSequence,
    metric: Metric,
    config: &AggregationConfig,
) -> Result<Vec<EventScore>> {
    if events.frame_rate != probs.frame_rate() {
        return Err(ZeroShotError::FrameRateMismatch {
            events: events.frame_rate,
            probs: probs.frame_rate(),
        });
    }
    let agg = Aggregator::new(config)?;
    let threshold = config.threshold;
    let score = |event_id: usize, label: bool, score: f64| EventScore {
        event_id,
        kind: metric,
        label,
        score,
        decision: score > threshold,
    };
    let region_scores = |regions: Vec<&PredictionRegion>, bc: bool| -> Result<Vec<EventScore>> {
        regions
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let target = r.target_speaker;
                let p = mean_over(probs, &r.frames, |row| {
                    if bc {
                        agg.backchannel(row, target)
                    } else {
                        agg.shift(row, target.other())
                    }
                })?;
                Ok(score(i, r.polarity == Polarity::Positive, p))
            })
            .collect()
    };
    match metric {
        Metric::ShiftHold => events
            .gaps
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let p = mean_over(probs, &g.eval_frames, |row| agg.shift(row, g.prev_speaker))?;
                Ok(score(i, g.label == GapLabel::Shift, p))
            })
            .collect(),
        Metric::ShiftPrediction => region_scores(events.shift_prediction.regions().collect(), false),
        Metric::BcPrediction => region_scores(events.bc_prediction.regions().collect(), true),
    }
}

/// Weighted F1 of one task with its majority-class baseline.
pub fn evaluate_f1(
    events: &EventSet,
    probs: &ProbSequence,
    metric: Metric,
    config: &AggregationConfig,
) -> Result<EvalReport> {
    let scores = score_events(events, probs, metric, config)?;
    Ok(EvalReport::from_scores(metric, &scores, config.threshold))
}

/// Per-event scores as `event_id,kind,label,score,decision`.
pub fn write_scores_csv<W: Write>(scores: &[EventScore], mut w: W) -> std::io::Result<()> {
    writeln!(w, "event_id,kind,label,score,decision")?;
    for s in scores {
        let (pos, neg) = s.kind.class_names();
        writeln!(
            w,
            "{},{},{},{:.6},{}",
            s.event_id,
            s.kind.name(),
            if s.label { pos } else { neg },
            s.score,
            if s.decision { pos } else { neg }
        )?;
    }
    Ok(())
}

/// Timing of one short-completion-point analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpQuery {
    pub utterance_start: f64,
    /// Time of the short completion point, seconds.
    pub scp_time: f64,
    /// End of the completion-point word, seconds.
    pub word_end: f64,
    pub prev_speaker: Speaker,
    /// Length of the predictive region before the completion point.
    pub predictive_span: f64,
}

impl ScpQuery {
    pub fn new(scp_time: f64, word_end: f64, prev_speaker: Speaker) -> Self {
        ScpQuery { utterance_start: 0.0, scp_time, word_end, prev_speaker, predictive_span: 0.2 }
    }
}

/// Mean shift probability in the hold and predictive regions and the value
/// at the reactive frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpRegions {
    pub hold: f64,
    pub predictive: f64,
    pub reactive: f64,
}

pub fn scp_regions(
    probs: &ProbSequence,
    query: &ScpQuery,
    config: &AggregationConfig,
) -> Result<ScpRegions> {
    let shift = shift_track(probs, query.prev_speaker, config)?;
    scp_regions_from_track(&shift, probs.frame_rate(), query)
}

/// Shift probability per frame for a fixed previous speaker.
pub fn shift_track(
    probs: &ProbSequence,
    prev: Speaker,
    config: &AggregationConfig,
) -> Result<Vec<f64>> {
    let agg = Aggregator::new(config)?;
    probs.rows().map(|row| agg.shift(row, prev)).collect()
}

/// Region analysis on a precomputed shift-probability track.
pub fn scp_regions_from_track(
    shift: &[f64],
    frame_rate: FrameRate,
    query: &ScpQuery,
) -> Result<ScpRegions> {
    if query.word_end < query.scp_time {
        return Err(ZeroShotError::InvalidQuery(format!(
            "word end {} precedes completion point {}",
            query.word_end, query.scp_time
        )));
    }
    let split = query.scp_time - query.predictive_span;
    let hold = frame_range_checked(frame_rate, query.utterance_start, split, shift.len(), "hold")?;
    let predictive =
        frame_range_checked(frame_rate, split, query.scp_time, shift.len(), "predictive")?;
    let reactive = frame_rate.frame_at(query.word_end);
    if reactive == 0 {
        return Err(ZeroShotError::EmptyRegion("reactive"));
    }
    if reactive > shift.len() {
        return Err(ZeroShotError::MissingFrames { start: reactive - 1, end: reactive, len: shift.len() });
    }
    let mean = |r: std::ops::Range<usize>| shift[r.clone()].iter().sum::<f64>() / r.len() as f64;
    Ok(ScpRegions { hold: mean(hold), predictive: mean(predictive), reactive: shift[reactive - 1] })
}

fn frame_range_checked(
    frame_rate: FrameRate,
    start: f64,
    end: f64,
    len: usize,
    name: &'static str,
) -> Result<std::ops::Range<usize>> {
    let r = frame_rate.frame_range(start.max(0.0), end);
    if r.start >= r.end {
        return Err(ZeroShotError::EmptyRegion(name));
    }
    if r.end > len {
        return Err(ZeroShotError::MissingFrames { start: r.start, end: r.end, len });
    }
    Ok(r)
}
