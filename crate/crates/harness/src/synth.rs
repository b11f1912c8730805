//! Seeded two-speaker dialogs with turn-yield cues.
//!
//! Dialogs are laid out in whole frames as a chain of inter-pausal units
//! (IPUs). Every IPU ends in a hold (pause, same speaker resumes), a shift
//! (pause, other speaker takes over) or an overlapped takeover. Listener
//! backchannels sit well inside long IPUs. The margins are derived from the
//! event definitions so the generator knows, without scanning the grid,
//! which pauses and backchannels the extractor will report.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use vap_core::{EventConfig, FrameRate, GapLabel, Speaker, VaGrid};

use crate::cues::{CueTracks, INTENSITY, PITCH};
use crate::HarnessError;

/// Cue channels of every synthetic dialog.
pub const CUE_NAMES: [&str; 2] = [PITCH, INTENSITY];

/// Overlapped takeovers last this long, seconds.
pub const OVERLAP_RANGE: (f64, f64) = (0.1, 0.4);
/// Backchannel durations, seconds (capped by the event definition).
pub const BACKCHANNEL_RANGE: (f64, f64) = (0.2, 0.8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueDirection {
    Rise,
    Fall,
}

impl CueDirection {
    fn sign(self) -> f64 {
        match self {
            CueDirection::Rise => 1.0,
            CueDirection::Fall => -1.0,
        }
    }
}

/// Shape of the cue channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueSpec {
    /// Movement of the pitch-like channel before a yielded turn.
    pub direction: CueDirection,
    /// Length of the pre-yield movement, seconds.
    pub span: f64,
    /// Size of the pitch movement, octaves.
    pub pitch_change: f64,
    /// Per-frame pitch noise, octaves.
    pub pitch_jitter: f64,
    /// Speaker baselines are drawn uniformly from this range, in octaves
    /// above 100 Hz.
    pub baseline_min: f64,
    pub baseline_max: f64,
    /// Drop of the intensity-like channel (nominal level 1) before a shift.
    pub intensity_drop: f64,
    pub intensity_jitter: f64,
}

impl Default for CueSpec {
    fn default() -> Self {
        CueSpec {
            direction: CueDirection::Rise,
            span: 0.5,
            pitch_change: 0.5,
            pitch_jitter: 0.03,
            baseline_min: 0.3,
            baseline_max: 1.5,
            intensity_drop: 0.1,
            intensity_jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDialogSpec {
    pub frame_rate: FrameRate,
    /// Dialog length, seconds.
    pub duration: f64,
    /// IPU length distribution, seconds.
    pub turn_mean: f64,
    pub turn_std: f64,
    /// Pause length distribution, seconds.
    pub gap_mean: f64,
    pub gap_std: f64,
    /// Probability that a pause is followed by the other speaker.
    pub shift_rate: f64,
    /// Probability that an IPU ends in an overlapped takeover.
    pub overlap_rate: f64,
    /// Probability that the listener backchannels during a long IPU.
    pub bc_rate: f64,
    pub cues: CueSpec,
    /// Event definitions the layout margins are derived from.
    pub events: EventConfig,
    pub seed: u64,
}

impl Default for SynthDialogSpec {
    fn default() -> Self {
        SynthDialogSpec {
            frame_rate: FrameRate::HZ50,
            duration: 60.0,
            turn_mean: 3.5,
            turn_std: 1.2,
            gap_mean: 0.5,
            gap_std: 0.25,
            shift_rate: 0.5,
            overlap_rate: 0.1,
            bc_rate: 0.3,
            cues: CueSpec::default(),
            events: EventConfig::default(),
            seed: 0,
        }
    }
}

/// Frame margins implied by a spec.
#[derive(Debug, Clone, Copy)]
struct Layout {
    frames: usize,
    min_ipu: usize,
    min_gap: usize,
    overlap: (usize, usize),
    bc_len: (usize, usize),
    bc_lead: usize,
    bc_tail: usize,
    span: usize,
}

impl Layout {
    fn new(spec: &SynthDialogSpec) -> Self {
        let fr = spec.frame_rate;
        let ev = &spec.events;
        let context = fr.frames(ev.min_context);
        let overlap = (fr.frames(OVERLAP_RANGE.0).max(1), fr.frames(OVERLAP_RANGE.1).max(1));
        let bc_max = fr.frames(BACKCHANNEL_RANGE.1.min(ev.bc_max_duration));
        let bc_len = (fr.frames(BACKCHANNEL_RANGE.0).clamp(1, bc_max.max(1)), bc_max);
        Layout {
            frames: fr.frames(spec.duration),
            // clean context after an overlapped start, never mistaken for a
            // backchannel, and room for a full prediction region
            min_ipu: (context + overlap.1 + 1)
                .max(fr.frames(ev.bc_max_duration) + 1)
                .max(fr.frames(ev.region_duration) + 1),
            min_gap: fr.frames(ev.eval_offset + ev.eval_duration) + 1,
            overlap,
            bc_len,
            bc_lead: context.max(overlap.1 + fr.frames(ev.bc_pre_silence)),
            bc_tail: context.max(overlap.1 + fr.frames(ev.bc_post_silence)),
            span: fr.frames(spec.cues.span).max(1),
        }
    }
}

impl SynthDialogSpec {
    /// Width of the cue features (two speakers per channel).
    pub fn cue_dims(&self) -> usize {
        2 * CUE_NAMES.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        let positive = [
            ("duration", self.duration),
            ("turn_mean", self.turn_mean),
            ("gap_mean", self.gap_mean),
            ("cues.span", self.cues.span),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("turn_std", self.turn_std),
            ("gap_std", self.gap_std),
            ("cues.pitch_change", self.cues.pitch_change),
            ("cues.pitch_jitter", self.cues.pitch_jitter),
            ("cues.intensity_drop", self.cues.intensity_drop),
            ("cues.intensity_jitter", self.cues.intensity_jitter),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("shift_rate", self.shift_rate), ("overlap_rate", self.overlap_rate), ("bc_rate", self.bc_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.cues.baseline_min.is_finite() && self.cues.baseline_min <= self.cues.baseline_max) {
            return bad("cue baseline range is empty".into());
        }
        if self.turn_mean > self.duration {
            return bad(format!("turn mean {} s exceeds the dialog duration {} s", self.turn_mean, self.duration));
        }
        let layout = Layout::new(self);
        if layout.min_ipu > layout.frames {
            return bad(format!(
                "dialog of {} s cannot hold one {:.2} s turn",
                self.duration,
                self.frame_rate.time_of(layout.min_ipu)
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SynthDialogSpec { seed, ..self.clone() }
    }
}

/// How an IPU hands over to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ending {
    Hold,
    Shift,
    OverlapShift,
    /// Last IPU of the dialog.
    Final,
}

impl Ending {
    pub fn yields(self) -> bool {
        matches!(self, Ending::Shift | Ending::OverlapShift)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipu {
    pub speaker: Speaker,
    pub frames: Range<usize>,
    pub ending: Ending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthGap {
    pub silence: Range<usize>,
    pub prev_speaker: Speaker,
    pub next_speaker: Speaker,
    pub label: GapLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthBackchannel {
    pub speaker: Speaker,
    pub segment: Range<usize>,
}

/// Events recorded while laying out the dialog.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ipus: Vec<Ipu>,
    pub gaps: Vec<TruthGap>,
    pub backchannels: Vec<TruthBackchannel>,
}

impl GroundTruth {
    pub fn count(&self, label: GapLabel) -> usize {
        self.gaps.iter().filter(|g| g.label == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDialog {
    pub grid: VaGrid,
    pub cues: CueTracks,
    pub truth: GroundTruth,
    pub seed: u64,
}

fn draw_frames<R: Rng>(rng: &mut R, fr: FrameRate, mean: f64, std: f64) -> usize {
    let secs = if std > 0.0 { Normal::new(mean, std).expect("validated").sample(rng) } else { mean };
    fr.frames(secs.max(0.0))
}

/// Paints one speaker's cue values over `frames`; a yielded IPU gets the
/// pitch movement and intensity drop over its final span.
pub(crate) struct CuePainter<'a> {
    pub spec: &'a CueSpec,
    pub span: usize,
}

impl CuePainter<'_> {
    pub fn paint<R: Rng>(
        &self,
        tracks: &mut CueTracks,
        speaker: Speaker,
        frames: Range<usize>,
        baseline: f64,
        level: f64,
        cue_from: Option<usize>,
        rng: &mut R,
    ) {
        let jitter = |rng: &mut R, std: f64| if std > 0.0 { Normal::new(0.0, std).unwrap().sample(rng) } else { 0.0 };
        let ramp_end = frames.end;
        for t in frames {
            let progress = match cue_from {
                Some(from) if t >= from => (t + 1 - from) as f64 / (ramp_end - from) as f64,
                _ => 0.0,
            };
            let pitch = baseline + self.spec.direction.sign() * self.spec.pitch_change * progress
                + jitter(rng, self.spec.pitch_jitter);
            let intensity = (level - self.spec.intensity_drop * progress + jitter(rng, self.spec.intensity_jitter)).max(0.01);
            let nonzero = |v: f64| if v == 0.0 { f32::MIN_POSITIVE } else { v as f32 };
            tracks.channels[0].values[speaker.index()][t] = nonzero(pitch);
            tracks.channels[1].values[speaker.index()][t] = nonzero(intensity);
        }
    }
}

pub(crate) fn draw_baselines<R: Rng>(spec: &CueSpec, rng: &mut R) -> [f64; 2] {
    let mut draw = || {
        if spec.baseline_max > spec.baseline_min {
            rng.random_range(spec.baseline_min..spec.baseline_max)
        } else {
            spec.baseline_min
        }
    };
    [draw(), draw()]
}

/// Generates one dialog from `spec.seed`.
pub fn generate_dialog(spec: &SynthDialogSpec) -> Result<SynthDialog, HarnessError> {
    spec.validate()?;
    let fr = spec.frame_rate;
    let lay = Layout::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // chain of IPUs; an ending is only committed once the next IPU fits
    let mut ipus: Vec<Ipu> = Vec::new();
    let mut speaker = if rng.random_bool(0.5) { Speaker::A } else { Speaker::B };
    let mut start = rng.random_range(0..=fr.frames(1.0).min(lay.frames - lay.min_ipu));
    let mut planned = Ending::Final;
    loop {
        let len = draw_frames(&mut rng, fr, spec.turn_mean, spec.turn_std).max(lay.min_ipu);
        if start + len > lay.frames {
            break;
        }
        if let Some(prev) = ipus.last_mut() {
            prev.ending = planned;
        }
        ipus.push(Ipu { speaker, frames: start..start + len, ending: Ending::Final });
        let end = start + len;
        if rng.random_bool(spec.overlap_rate) {
            planned = Ending::OverlapShift;
            speaker = speaker.other();
            start = end - rng.random_range(lay.overlap.0..=lay.overlap.1);
        } else {
            let shift = rng.random_bool(spec.shift_rate);
            let pause = draw_frames(&mut rng, fr, spec.gap_mean, spec.gap_std).max(lay.min_gap);
            planned = if shift { Ending::Shift } else { Ending::Hold };
            if shift {
                speaker = speaker.other();
            }
            start = end + pause;
        }
    }

    let mut grid = VaGrid::silent(fr, lay.frames);
    let mut tracks = CueTracks::silent(fr, lay.frames, &CUE_NAMES);
    let baselines = draw_baselines(&spec.cues, &mut rng);
    let painter = CuePainter { spec: &spec.cues, span: lay.span };
    let mut truth = GroundTruth::default();
    for (i, ipu) in ipus.iter().enumerate() {
        grid.set(ipu.speaker, ipu.frames.clone(), true);
        let cue_from = ipu.ending.yields().then(|| ipu.frames.end - painter.span.min(ipu.frames.len()));
        painter.paint(&mut tracks, ipu.speaker, ipu.frames.clone(), baselines[ipu.speaker.index()], 1.0, cue_from, &mut rng);
        if matches!(ipu.ending, Ending::Hold | Ending::Shift) {
            let next = &ipus[i + 1];
            truth.gaps.push(TruthGap {
                silence: ipu.frames.end..next.frames.start,
                prev_speaker: ipu.speaker,
                next_speaker: next.speaker,
                label: if ipu.ending == Ending::Shift { GapLabel::Shift } else { GapLabel::Hold },
            });
        }
        let room = ipu.frames.len().saturating_sub(lay.bc_lead + lay.bc_tail);
        if room >= lay.bc_len.0 && rng.random_bool(spec.bc_rate) {
            let len = rng.random_range(lay.bc_len.0..=lay.bc_len.1.min(room));
            let at = ipu.frames.start + lay.bc_lead + rng.random_range(0..=room - len);
            let listener = ipu.speaker.other();
            grid.set(listener, at..at + len, true);
            painter.paint(&mut tracks, listener, at..at + len, baselines[listener.index()], 0.7, None, &mut rng);
            truth.backchannels.push(TruthBackchannel { speaker: listener, segment: at..at + len });
        }
    }
    truth.ipus = ipus;
    truth.backchannels.sort_by_key(|b| (b.segment.start, b.speaker));
    Ok(SynthDialog { grid, cues: tracks, truth, seed: spec.seed })
}

/// `count` dialogs seeded `spec.seed, spec.seed + 1, ...`.
pub fn generate_corpus(spec: &SynthDialogSpec, count: usize) -> Result<Vec<SynthDialog>, HarnessError> {
    (0..count as u64).map(|i| generate_dialog(&spec.with_seed(spec.seed.wrapping_add(i)))).collect()
}
