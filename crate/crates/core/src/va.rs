//! Voice activity rasterization, the projection-label codec and activity
//! history features.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of projection classes (8 binary bins).
pub const NUM_CLASSES: usize = 256;

/// Length of the projection window in seconds.
pub const PROJECTION_WINDOW: f64 = 2.0;

/// History regions as `(far, near)` seconds into the past.
pub const HISTORY_REGIONS: [(f64, f64); 5] = [
    (f64::INFINITY, 60.0),
    (60.0, 30.0),
    (30.0, 10.0),
    (10.0, 5.0),
    (5.0, 0.0),
];

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VaError {
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("segment {index}: unknown speaker {value:?}")]
    UnknownSpeaker { index: usize, value: String },
    #[error("unsupported frame rate {0} Hz (expected 20, 50 or 100)")]
    UnsupportedFrameRate(u32),
    #[error("duration {duration}s ends before segment {index} ({end}s)")]
    DurationTooShort { index: usize, end: f64, duration: f64 },
    #[error("projection window at frame {frame} needs frames up to {needed}, grid has {len}")]
    WindowOutOfRange { frame: usize, needed: usize, len: usize },
    #[error("class index {0} out of range 0..256")]
    ClassOutOfRange(usize),
    #[error("frame {frame} out of range for grid of {len} frames")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error("invalid bin configuration: {0}")]
    InvalidBins(String),
    #[error("speaker rows differ in length ({0} vs {1})")]
    RowLengthMismatch(usize, usize),
    #[error("annotation parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub const BOTH: [Speaker; 2] = [Speaker::A, Speaker::B];

    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Speaker::A => 0,
            Speaker::B => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Speaker> {
        match s.trim() {
            "A" | "a" => Some(Speaker::A),
            "B" | "b" => Some(Speaker::B),
            _ => None,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::A => "A",
            Speaker::B => "B",
        })
    }
}

/// Predictor frame rate. Only the three rates the encoder supports are valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FrameRate(u32);

impl FrameRate {
    pub const HZ20: FrameRate = FrameRate(20);
    pub const HZ50: FrameRate = FrameRate(50);
    pub const HZ100: FrameRate = FrameRate(100);

    pub fn new(hz: u32) -> Result<Self> {
        match hz {
            20 | 50 | 100 => Ok(FrameRate(hz)),
            other => Err(VaError::UnsupportedFrameRate(other)),
        }
    }

    pub fn hz(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Number of whole frames spanning `seconds`.
    pub fn frames(self, seconds: f64) -> usize {
        (seconds * self.as_f64()).round().max(0.0) as usize
    }

    /// First frame whose center lies at or after `time`.
    pub fn frame_at(self, time: f64) -> usize {
        (time * self.as_f64() - 0.5 - TIME_EPS).ceil().max(0.0) as usize
    }

    /// Frames whose centers lie in `[start, end)`.
    pub fn frame_range(self, start: f64, end: f64) -> Range<usize> {
        self.frame_at(start)..self.frame_at(end)
    }

    pub fn time_of(self, frame: usize) -> f64 {
        frame as f64 / self.as_f64()
    }
}

impl TryFrom<u32> for FrameRate {
    type Error = VaError;

    fn try_from(hz: u32) -> Result<Self> {
        FrameRate::new(hz)
    }
}

impl From<FrameRate> for u32 {
    fn from(fr: FrameRate) -> u32 {
        fr.0
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Hz", self.0)
    }
}

/// One speaker's contiguous activity interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaSegment {
    pub speaker: Speaker,
    pub start: f64,
    pub end: f64,
}

impl VaSegment {
    pub fn new(speaker: Speaker, start: f64, end: f64) -> Self {
        VaSegment { speaker, start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(VaError::InvalidSegment {
                index,
                reason: format!("{reason} ({}: {}..{})", self.speaker, self.start, self.end),
            })
        };
        if !self.start.is_finite() || !self.end.is_finite() {
            return bad("non-finite time");
        }
        if self.start < 0.0 || self.end < 0.0 {
            return bad("negative time");
        }
        if self.end <= self.start {
            return bad("end must be after start");
        }
        Ok(())
    }
}

/// Validates segments and returns each speaker's segments sorted with
/// overlapping or touching intervals merged.
pub fn merge_segments(segments: &[VaSegment]) -> Result<Vec<VaSegment>> {
    for (i, s) in segments.iter().enumerate() {
        s.validate(i)?;
    }
    let mut out = Vec::with_capacity(segments.len());
    for speaker in Speaker::BOTH {
        let mut own: Vec<VaSegment> =
            segments.iter().filter(|s| s.speaker == speaker).copied().collect();
        own.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut merged: Vec<VaSegment> = Vec::with_capacity(own.len());
        for seg in own {
            match merged.last_mut() {
                Some(last) if seg.start <= last.end => last.end = last.end.max(seg.end),
                _ => merged.push(seg),
            }
        }
        out.extend(merged);
    }
    Ok(out)
}

/// Binary per-speaker activity at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaGrid {
    frame_rate: FrameRate,
    rows: [Vec<bool>; 2],
}

impl VaGrid {
    pub fn new(frame_rate: FrameRate, a: Vec<bool>, b: Vec<bool>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(VaError::RowLengthMismatch(a.len(), b.len()));
        }
        Ok(VaGrid { frame_rate, rows: [a, b] })
    }

    pub fn silent(frame_rate: FrameRate, frames: usize) -> Self {
        VaGrid { frame_rate, rows: [vec![false; frames], vec![false; frames]] }
    }

    pub fn frame_rate(&self) -> FrameRate {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows[0].is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.frame_rate.as_f64()
    }

    pub fn row(&self, speaker: Speaker) -> &[bool] {
        &self.rows[speaker.index()]
    }

    pub fn is_active(&self, speaker: Speaker, frame: usize) -> bool {
        self.rows[speaker.index()][frame]
    }

    pub fn set(&mut self, speaker: Speaker, frames: Range<usize>, value: bool) {
        let row = &mut self.rows[speaker.index()];
        let end = frames.end.min(row.len());
        for v in &mut row[frames.start.min(end)..end] {
            *v = value;
        }
    }

    /// The same dialog with the speaker rows exchanged.
    pub fn swapped(&self) -> VaGrid {
        VaGrid { frame_rate: self.frame_rate, rows: [self.rows[1].clone(), self.rows[0].clone()] }
    }

    pub fn active_count(&self, speaker: Speaker) -> usize {
        self.row(speaker).iter().filter(|&&v| v).count()
    }

    /// Maximal runs of activity for one speaker.
    pub fn runs(&self, speaker: Speaker) -> Vec<Range<usize>> {
        let row = self.row(speaker);
        let mut runs = Vec::new();
        let mut t = 0;
        while t < row.len() {
            if row[t] {
                let start = t;
                while t < row.len() && row[t] {
                    t += 1;
                }
                runs.push(start..t);
            } else {
                t += 1;
            }
        }
        runs
    }

    /// Segments in seconds recovered from the frame runs.
    pub fn to_segments(&self) -> Vec<VaSegment> {
        let fr = self.frame_rate;
        Speaker::BOTH
            .iter()
            .flat_map(|&s| {
                self.runs(s)
                    .into_iter()
                    .map(move |r| VaSegment::new(s, fr.time_of(r.start), fr.time_of(r.end)))
            })
            .collect()
    }

    /// Debug export: a header line and one `a,b` row of 0/1 per frame.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,A,B")?;
        for t in 0..self.len() {
            writeln!(w, "{},{},{}", t, self.rows[0][t] as u8, self.rows[1][t] as u8)?;
        }
        Ok(())
    }
}

/// Rasterizes segments: a frame is active for a speaker iff the frame's
/// center time lies inside one of that speaker's segments.
pub fn rasterize_va(segments: &[VaSegment], frame_rate: FrameRate, duration: f64) -> Result<VaGrid> {
    let merged = merge_segments(segments)?;
    if let Some((index, seg)) = segments
        .iter()
        .enumerate()
        .find(|(_, s)| s.end > duration + TIME_EPS)
    {
        return Err(VaError::DurationTooShort { index, end: seg.end, duration });
    }
    let frames = (duration * frame_rate.as_f64() - TIME_EPS).ceil().max(0.0) as usize;
    let mut grid = VaGrid::silent(frame_rate, frames);
    for seg in merged {
        grid.set(seg.speaker, frame_rate.frame_range(seg.start, seg.end), true);
    }
    Ok(grid)
}

/// Durations of the four projection bins of each speaker, nearest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub bin_durations: [f64; 4],
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig { bin_durations: [0.2, 0.4, 0.6, 0.8] }
    }
}

impl BinConfig {
    pub fn new(bin_durations: [f64; 4]) -> Result<Self> {
        let cfg = BinConfig { bin_durations };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(VaError::InvalidBins(format!(
                "durations must be positive: {:?}",
                self.bin_durations
            )));
        }
        let total: f64 = self.bin_durations.iter().sum();
        if (total - PROJECTION_WINDOW).abs() > 1e-6 {
            return Err(VaError::InvalidBins(format!(
                "durations sum to {total}s, expected {PROJECTION_WINDOW}s"
            )));
        }
        Ok(())
    }

    /// Cumulative frame offsets `[0, b1, b1+b2, ..., window]` at a frame rate.
    pub fn boundaries(&self, frame_rate: FrameRate) -> Result<[usize; 5]> {
        self.validate()?;
        let mut out = [0usize; 5];
        let mut acc = 0.0;
        for (i, d) in self.bin_durations.iter().enumerate() {
            acc += d;
            out[i + 1] = frame_rate.frames(acc);
            if out[i + 1] <= out[i] {
                return Err(VaError::InvalidBins(format!(
                    "bin {} is empty at {frame_rate}",
                    i + 1
                )));
            }
        }
        Ok(out)
    }

    pub fn window_frames(&self, frame_rate: FrameRate) -> usize {
        frame_rate.frames(self.bin_durations.iter().sum())
    }
}

/// The eight projection bits of one frame: speaker A bins 1..4 then speaker B
/// bins 1..4, bin 1 nearest in time.
///
/// Packing puts the A nibble in the high four bits with bin 1 most
/// significant, so the class index is `sum(bit_i * 2^(7 - i))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectionLabel {
    pub pattern: [[bool; 4]; 2],
}

impl ProjectionLabel {
    pub fn from_pattern(pattern: [[bool; 4]; 2]) -> Self {
        ProjectionLabel { pattern }
    }

    pub fn class_index(&self) -> usize {
        let mut idx = 0usize;
        for bit in self.pattern.iter().flatten() {
            idx = (idx << 1) | (*bit as usize);
        }
        idx
    }

    pub fn decode(class_index: usize) -> Result<Self> {
        if class_index >= NUM_CLASSES {
            return Err(VaError::ClassOutOfRange(class_index));
        }
        let mut pattern = [[false; 4]; 2];
        for (i, bit) in pattern.iter_mut().flatten().enumerate() {
            *bit = (class_index >> (7 - i)) & 1 == 1;
        }
        Ok(ProjectionLabel { pattern })
    }

    pub fn bins(&self, speaker: Speaker) -> [bool; 4] {
        self.pattern[speaker.index()]
    }

    /// Bin `bin` (1-based) of a speaker.
    pub fn bin(&self, speaker: Speaker, bin: usize) -> bool {
        self.pattern[speaker.index()][bin - 1]
    }

    /// The pattern with speaker rows exchanged.
    pub fn swapped(&self) -> Self {
        ProjectionLabel { pattern: [self.pattern[1], self.pattern[0]] }
    }
}

impl fmt::Display for ProjectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.pattern.iter().flatten() {
            f.write_str(if *bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn decode_class(class_index: usize) -> Result<ProjectionLabel> {
    ProjectionLabel::decode(class_index)
}

/// Encodes the future window following frame `t` (frames `t+1 ..= t+W`).
///
/// A bin is set iff strictly more than half of its frames are active.
pub fn encode_projection(grid: &VaGrid, t: usize, bins: &BinConfig) -> Result<ProjectionLabel> {
    let bounds = bins.boundaries(grid.frame_rate())?;
    let start = t + 1;
    let needed = start + bounds[4];
    if needed > grid.len() {
        return Err(VaError::WindowOutOfRange { frame: t, needed, len: grid.len() });
    }
    let mut pattern = [[false; 4]; 2];
    for speaker in Speaker::BOTH {
        let row = grid.row(speaker);
        for b in 0..4 {
            let span = &row[start + bounds[b]..start + bounds[b + 1]];
            let active = span.iter().filter(|&&v| v).count();
            pattern[speaker.index()][b] = 2 * active > span.len();
        }
    }
    Ok(ProjectionLabel { pattern })
}

/// Class index per frame for every frame that has a full future window.
pub fn encode_all(grid: &VaGrid, bins: &BinConfig) -> Result<Vec<usize>> {
    let window = bins.window_frames(grid.frame_rate());
    (0..grid.len().saturating_sub(window))
        .map(|t| encode_projection(grid, t, bins).map(|l| l.class_index()))
        .collect()
}

/// Share of speaker A's activity in each past region, nearest region last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaHistory {
    pub ratios: [f64; 5],
}

impl VaHistory {
    pub const NEUTRAL: VaHistory = VaHistory { ratios: [0.5; 5] };
}

struct PrefixCounts {
    a: Vec<usize>,
    b: Vec<usize>,
}

impl PrefixCounts {
    fn new(grid: &VaGrid) -> Self {
        let prefix = |row: &[bool]| {
            let mut acc = Vec::with_capacity(row.len() + 1);
            acc.push(0);
            for &v in row {
                acc.push(acc.last().unwrap() + v as usize);
            }
            acc
        };
        PrefixCounts { a: prefix(grid.row(Speaker::A)), b: prefix(grid.row(Speaker::B)) }
    }

    fn history(&self, frame_rate: FrameRate, t: usize) -> VaHistory {
        let mut ratios = [0.5; 5];
        for (ratio, &(far, near)) in ratios.iter_mut().zip(HISTORY_REGIONS.iter()) {
            let lo = if far.is_infinite() { 0 } else { t.saturating_sub(frame_rate.frames(far)) };
            let hi = t.saturating_sub(frame_rate.frames(near));
            let a = self.a[hi] - self.a[lo];
            let b = self.b[hi] - self.b[lo];
            if a + b > 0 {
                *ratio = a as f64 / (a + b) as f64;
            }
        }
        VaHistory { ratios }
    }
}

/// Activity history at frame `t`, computed over frames strictly before `t`.
/// Regions without any speech are 0.5.
pub fn va_history(grid: &VaGrid, t: usize) -> Result<VaHistory> {
    if t >= grid.len() {
        return Err(VaError::FrameOutOfRange { frame: t, len: grid.len() });
    }
    Ok(PrefixCounts::new(grid).history(grid.frame_rate(), t))
}

/// History features for every frame of the grid.
pub fn va_history_all(grid: &VaGrid) -> Vec<VaHistory> {
    let counts = PrefixCounts::new(grid);
    (0..grid.len()).map(|t| counts.history(grid.frame_rate(), t)).collect()
}
