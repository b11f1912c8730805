//! Turn-taking events extracted from a voice activity grid.
//!
//! Three families are produced:
//!
//! * **Shift/Hold gaps**: mutual silences between clean single-speaker
//!   stretches. Evaluation frames start 50 ms into the silence and span 100 ms.
//! * **Shift prediction** regions: the 500 ms ending a turn before a Shift
//!   (positive) and 500 ms windows of single-speaker activity that are at
//!   least 2 s away from any activity of the other speaker (negative).
//! * **Backchannel prediction** regions: the 500 ms before a short isolated
//!   segment (positive), and negatives drawn like Shift prediction negatives
//!   but also from mutual silence.
//!
//! Negatives are sampled without replacement from the full candidate set to
//! match the number of positives. When there are too few candidates the
//! shortfall is reported, never padded.

use std::io::Write;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::va::{FrameRate, Speaker, VaGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// Single-speaker activity required on both sides of a gap, seconds.
    pub min_context: f64,
    pub eval_offset: f64,
    pub eval_duration: f64,
    /// Length of prediction regions, seconds.
    pub region_duration: f64,
    /// Distance a negative region must keep from future activity of the
    /// target speaker, seconds.
    pub negative_horizon: f64,
    pub bc_max_duration: f64,
    pub bc_pre_silence: f64,
    pub bc_post_silence: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            min_context: 1.0,
            eval_offset: 0.05,
            eval_duration: 0.1,
            region_duration: 0.5,
            negative_horizon: 2.0,
            bc_max_duration: 1.0,
            bc_pre_silence: 1.0,
            bc_post_silence: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GapLabel {
    Shift,
    Hold,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GapEvent {
    /// Frames of the mutual silence.
    pub silence: Range<usize>,
    pub prev_speaker: Speaker,
    pub next_speaker: Speaker,
    pub label: GapLabel,
    pub eval_frames: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictionKind {
    ShiftPred,
    BcPred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictionRegion {
    pub kind: PredictionKind,
    pub polarity: Polarity,
    pub frames: Range<usize>,
    /// Speaker whose upcoming activity is being predicted.
    pub target_speaker: Speaker,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackchannelEvent {
    pub speaker: Speaker,
    pub segment: Range<usize>,
    /// Own-track silence before and after the segment, in frames.
    pub pre_silence: usize,
    pub post_silence: usize,
}

/// Positive regions plus the sampled negatives for one prediction task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub positives: Vec<PredictionRegion>,
    pub negatives: Vec<PredictionRegion>,
    /// Number of negative candidates available before sampling.
    pub candidates: usize,
}

impl RegionSample {
    /// Negatives missing to balance the positives.
    pub fn shortfall(&self) -> usize {
        self.positives.len().saturating_sub(self.negatives.len())
    }

    pub fn regions(&self) -> impl Iterator<Item = &PredictionRegion> {
        self.positives.iter().chain(self.negatives.iter())
    }
}

/// Every event family for one dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub frame_rate: FrameRate,
    pub gaps: Vec<GapEvent>,
    pub shift_prediction: RegionSample,
    pub backchannels: Vec<BackchannelEvent>,
    pub bc_prediction: RegionSample,
}

struct Frames {
    context: usize,
    region: usize,
    horizon: usize,
}

impl Frames {
    fn new(fr: FrameRate, cfg: &EventConfig) -> Self {
        Frames {
            context: fr.frames(cfg.min_context),
            region: fr.frames(cfg.region_duration),
            horizon: fr.frames(cfg.negative_horizon),
        }
    }
}

/// Per-frame activity classes with prefix sums for O(1) range queries.
struct Activity {
    // only[s][k]: frames in [0, k) where speaker s alone is active
    only: [Vec<usize>; 2],
    // any[s][k]: frames in [0, k) where speaker s is active
    any: [Vec<usize>; 2],
}

impl Activity {
    fn new(grid: &VaGrid) -> Self {
        let (a, b) = (grid.row(Speaker::A), grid.row(Speaker::B));
        let prefix = |f: &dyn Fn(usize) -> bool| {
            let mut acc = vec![0usize; grid.len() + 1];
            for t in 0..grid.len() {
                acc[t + 1] = acc[t] + f(t) as usize;
            }
            acc
        };
        Activity {
            only: [prefix(&|t| a[t] && !b[t]), prefix(&|t| b[t] && !a[t])],
            any: [prefix(&|t| a[t]), prefix(&|t| b[t])],
        }
    }

    fn all_only(&self, s: Speaker, r: Range<usize>) -> bool {
        let p = &self.only[s.index()];
        p[r.end] - p[r.start] == r.len()
    }

    fn none_active(&self, s: Speaker, r: Range<usize>) -> bool {
        let p = &self.any[s.index()];
        p[r.end] == p[r.start]
    }

    fn all_active(&self, s: Speaker, r: Range<usize>) -> bool {
        let p = &self.any[s.index()];
        p[r.end] - p[r.start] == r.len()
    }
}

fn sole_speaker(grid: &VaGrid, t: usize) -> Option<Speaker> {
    match (grid.is_active(Speaker::A, t), grid.is_active(Speaker::B, t)) {
        (true, false) => Some(Speaker::A),
        (false, true) => Some(Speaker::B),
        _ => None,
    }
}

/// Mutual-silence gaps between clean single-speaker stretches.
pub fn extract_gaps(grid: &VaGrid, cfg: &EventConfig) -> Vec<GapEvent> {
    let fr = grid.frame_rate();
    let n = Frames::new(fr, cfg);
    let act = Activity::new(grid);
    let (a, b) = (grid.row(Speaker::A), grid.row(Speaker::B));
    let len = grid.len();
    let mut gaps = Vec::new();
    let mut t = 0;
    while t < len {
        if a[t] || b[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < len && !a[t] && !b[t] {
            t += 1;
        }
        let end = t;
        if start == 0 || end == len {
            continue;
        }
        let (Some(prev), Some(next)) = (sole_speaker(grid, start - 1), sole_speaker(grid, end))
        else {
            continue;
        };
        if start < n.context || end + n.context > len {
            continue;
        }
        if !act.all_only(prev, start - n.context..start) || !act.all_only(next, end..end + n.context)
        {
            continue;
        }
        let t0 = fr.time_of(start) + cfg.eval_offset;
        let eval_frames = fr.frame_range(t0, t0 + cfg.eval_duration);
        if eval_frames.is_empty() || eval_frames.end > end {
            continue;
        }
        gaps.push(GapEvent {
            silence: start..end,
            prev_speaker: prev,
            next_speaker: next,
            label: if prev == next { GapLabel::Hold } else { GapLabel::Shift },
            eval_frames,
        });
    }
    gaps
}

/// Short, isolated segments: at most `bc_max_duration` long, with the
/// required own-track silence before and after.
pub fn find_backchannels(grid: &VaGrid, cfg: &EventConfig) -> Vec<BackchannelEvent> {
    let fr = grid.frame_rate();
    let max_len = fr.frames(cfg.bc_max_duration);
    let pre = fr.frames(cfg.bc_pre_silence);
    let post = fr.frames(cfg.bc_post_silence);
    let mut out = Vec::new();
    for speaker in Speaker::BOTH {
        let runs = grid.runs(speaker);
        for (i, run) in runs.iter().enumerate() {
            if run.len() > max_len {
                continue;
            }
            let prev_end = if i > 0 { runs[i - 1].end } else { 0 };
            let next_start = runs.get(i + 1).map_or(grid.len(), |r| r.start);
            let pre_silence = run.start - prev_end;
            let post_silence = next_start - run.end;
            if pre_silence < pre || post_silence < post {
                continue;
            }
            out.push(BackchannelEvent {
                speaker,
                segment: run.clone(),
                pre_silence,
                post_silence,
            });
        }
    }
    out.sort_by_key(|e| (e.segment.start, e.speaker));
    out
}

fn overlaps(r: &Range<usize>, zones: &[Range<usize>]) -> bool {
    zones.iter().any(|z| r.start < z.end && z.start < r.end)
}

/// The 500 ms windows preceding every gap and every backchannel onset.
/// Negatives may not overlap them.
pub fn exclusion_zones(
    grid: &VaGrid,
    gaps: &[GapEvent],
    backchannels: &[BackchannelEvent],
    cfg: &EventConfig,
) -> Vec<Range<usize>> {
    let p = grid.frame_rate().frames(cfg.region_duration);
    gaps.iter()
        .map(|g| g.silence.start.saturating_sub(p)..g.silence.start)
        .chain(backchannels.iter().map(|b| b.segment.start.saturating_sub(p)..b.segment.start))
        .collect()
}

/// Negative Shift-prediction candidates: windows where one speaker talks
/// alone and the other stays silent for the window plus the horizon.
pub fn shift_negative_candidates(
    grid: &VaGrid,
    exclusions: &[Range<usize>],
    cfg: &EventConfig,
) -> Vec<PredictionRegion> {
    let n = Frames::new(grid.frame_rate(), cfg);
    let act = Activity::new(grid);
    let mut out = Vec::new();
    if n.region == 0 {
        return out;
    }
    for start in 0..grid.len().saturating_sub(n.region + n.horizon - 1) {
        let frames = start..start + n.region;
        if overlaps(&frames, exclusions) {
            continue;
        }
        for speaker in Speaker::BOTH {
            let target = speaker.other();
            if act.all_only(speaker, frames.clone())
                && act.none_active(target, start..start + n.region + n.horizon)
            {
                out.push(PredictionRegion {
                    kind: PredictionKind::ShiftPred,
                    polarity: Polarity::Negative,
                    frames: frames.clone(),
                    target_speaker: target,
                });
            }
        }
    }
    out
}

/// Negative backchannel candidates: the target stays silent for the window
/// plus the horizon while the other speaker is either talking throughout the
/// window or silent throughout it.
pub fn bc_negative_candidates(
    grid: &VaGrid,
    exclusions: &[Range<usize>],
    cfg: &EventConfig,
) -> Vec<PredictionRegion> {
    let n = Frames::new(grid.frame_rate(), cfg);
    let act = Activity::new(grid);
    let mut out = Vec::new();
    if n.region == 0 {
        return out;
    }
    for start in 0..grid.len().saturating_sub(n.region + n.horizon - 1) {
        let frames = start..start + n.region;
        if overlaps(&frames, exclusions) {
            continue;
        }
        for target in Speaker::BOTH {
            let speaker = target.other();
            if act.none_active(target, start..start + n.region + n.horizon)
                && (act.all_active(speaker, frames.clone())
                    || act.none_active(speaker, frames.clone()))
            {
                out.push(PredictionRegion {
                    kind: PredictionKind::BcPred,
                    polarity: Polarity::Negative,
                    frames: frames.clone(),
                    target_speaker: target,
                });
            }
        }
    }
    out
}

fn sample_negatives<R: Rng + ?Sized>(
    candidates: Vec<PredictionRegion>,
    count: usize,
    rng: &mut R,
) -> (Vec<PredictionRegion>, usize) {
    let available = candidates.len();
    if count >= available {
        return (candidates, available);
    }
    let mut picked = rand::seq::index::sample(rng, available, count).into_vec();
    picked.sort_unstable();
    let out = picked.into_iter().map(|i| candidates[i].clone()).collect();
    (out, available)
}

/// Positive Shift-prediction regions (the final 500 ms of the turn before
/// each Shift) and count-matched negatives.
pub fn shift_prediction_regions<R: Rng + ?Sized>(
    grid: &VaGrid,
    gaps: &[GapEvent],
    cfg: &EventConfig,
    rng: &mut R,
) -> RegionSample {
    let n = Frames::new(grid.frame_rate(), cfg);
    let act = Activity::new(grid);
    let positives: Vec<_> = gaps
        .iter()
        .filter(|g| g.label == GapLabel::Shift && g.silence.start >= n.region && n.region > 0)
        .filter(|g| act.all_only(g.prev_speaker, g.silence.start - n.region..g.silence.start))
        .map(|g| PredictionRegion {
            kind: PredictionKind::ShiftPred,
            polarity: Polarity::Positive,
            frames: g.silence.start - n.region..g.silence.start,
            target_speaker: g.next_speaker,
        })
        .collect();
    let backchannels = find_backchannels(grid, cfg);
    let exclusions = exclusion_zones(grid, gaps, &backchannels, cfg);
    let candidates = shift_negative_candidates(grid, &exclusions, cfg);
    let (negatives, candidates) = sample_negatives(candidates, positives.len(), rng);
    RegionSample { positives, negatives, candidates }
}

/// Backchannel events with their positive regions (500 ms before onset) and
/// count-matched negatives.
pub fn backchannel_regions<R: Rng + ?Sized>(
    grid: &VaGrid,
    cfg: &EventConfig,
    rng: &mut R,
) -> (Vec<BackchannelEvent>, RegionSample) {
    let n = Frames::new(grid.frame_rate(), cfg);
    let backchannels = find_backchannels(grid, cfg);
    let positives: Vec<_> = backchannels
        .iter()
        .filter(|b| b.segment.start >= n.region && n.region > 0)
        .map(|b| PredictionRegion {
            kind: PredictionKind::BcPred,
            polarity: Polarity::Positive,
            frames: b.segment.start - n.region..b.segment.start,
            target_speaker: b.speaker,
        })
        .collect();
    let gaps = extract_gaps(grid, cfg);
    let exclusions = exclusion_zones(grid, &gaps, &backchannels, cfg);
    let candidates = bc_negative_candidates(grid, &exclusions, cfg);
    let (negatives, candidates) = sample_negatives(candidates, positives.len(), rng);
    (backchannels, RegionSample { positives, negatives, candidates })
}

/// All event families of one dialog.
pub fn extract_events<R: Rng + ?Sized>(grid: &VaGrid, cfg: &EventConfig, rng: &mut R) -> EventSet {
    let gaps = extract_gaps(grid, cfg);
    let shift_prediction = shift_prediction_regions(grid, &gaps, cfg, rng);
    let (backchannels, bc_prediction) = backchannel_regions(grid, cfg, rng);
    EventSet { frame_rate: grid.frame_rate(), gaps, shift_prediction, backchannels, bc_prediction }
}

#[derive(Serialize)]
struct EventLine<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    polarity: Option<Polarity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker: Option<Speaker>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prev_speaker: Option<Speaker>,
    #[serde(skip_serializing_if = "Option::is_none")]
    next_speaker: Option<Speaker>,
    frame_start: usize,
    frame_end: usize,
    frame_rate: u32,
}

impl EventSet {
    /// One JSON object per line for every event and region.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let fr = self.frame_rate.hz();
        let mut emit = |line: EventLine| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")
        };
        for g in &self.gaps {
            emit(EventLine {
                kind: match g.label {
                    GapLabel::Shift => "shift",
                    GapLabel::Hold => "hold",
                },
                polarity: None,
                speaker: None,
                prev_speaker: Some(g.prev_speaker),
                next_speaker: Some(g.next_speaker),
                frame_start: g.eval_frames.start,
                frame_end: g.eval_frames.end,
                frame_rate: fr,
            })?;
        }
        for b in &self.backchannels {
            emit(EventLine {
                kind: "backchannel",
                polarity: None,
                speaker: Some(b.speaker),
                prev_speaker: None,
                next_speaker: None,
                frame_start: b.segment.start,
                frame_end: b.segment.end,
                frame_rate: fr,
            })?;
        }
        for r in self.shift_prediction.regions().chain(self.bc_prediction.regions()) {
            emit(EventLine {
                kind: match r.kind {
                    PredictionKind::ShiftPred => "shift_prediction",
                    PredictionKind::BcPred => "bc_prediction",
                },
                polarity: Some(r.polarity),
                speaker: Some(r.target_speaker),
                prev_speaker: None,
                next_speaker: None,
                frame_start: r.frames.start,
                frame_end: r.frames.end,
                frame_rate: fr,
            })?;
        }
        Ok(())
    }
}
