//! Short completion point (SCP) material: the short/long phrase pairs and a
//! synthetic analog built from cue channels.
//!
//! A pair shares everything up to the completion point. The short version
//! ends there with the yield cue over its final span; the long version keeps
//! a level cue through the completion point and carries on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vap_core::zeroshot::ScpQuery;
use vap_core::{Speaker, VaGrid};

use crate::cues::CueTracks;
use crate::synth::{draw_baselines, CuePainter, SynthDialogSpec, CUE_NAMES};
use crate::HarnessError;

const PHRASES: &str = include_str!("../data/phrases.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasePair {
    pub item: u32,
    pub short: String,
    pub long: String,
}

impl PhrasePair {
    /// Words the long version adds after the completion point.
    pub fn continuation(&self) -> &str {
        self.long.strip_prefix(self.short.trim_end_matches('?')).unwrap_or("").trim()
    }
}

/// The nine phrase pairs shipped with the crate.
pub fn phrase_pairs() -> Vec<PhrasePair> {
    csv::Reader::from_reader(PHRASES.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled phrase table parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Short,
    Long,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Short => "short",
            Variant::Long => "long",
        }
    }
}

/// One utterance ready for region analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpSample {
    pub grid: VaGrid,
    pub cues: CueTracks,
    pub query: ScpQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScpPair {
    pub short: ScpSample,
    pub long: ScpSample,
}

impl ScpPair {
    pub fn get(&self, v: Variant) -> &ScpSample {
        match v {
            Variant::Short => &self.short,
            Variant::Long => &self.long,
        }
    }
}

/// Builds one synthetic pair: a lead-in turn by B that yields to A, then A's
/// utterance. Cue shapes and frame rate come from `spec`.
pub fn synth_scp_pair(spec: &SynthDialogSpec, seed: u64) -> Result<ScpPair, HarnessError> {
    spec.validate()?;
    let fr = spec.frame_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secs = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| fr.frames(rng.random_range(lo..hi));
    let lead_in = secs(&mut rng, 0.3, 1.0);
    let prompt = secs(&mut rng, 2.0, 4.0);
    let gap = secs(&mut rng, 0.3, 0.7);
    let to_scp = secs(&mut rng, 1.5, 3.0);
    let continuation = secs(&mut rng, 1.0, 2.5);
    let tail = fr.frames(3.0);
    let span = fr.frames(spec.cues.span).max(1);
    let baselines = draw_baselines(&spec.cues, &mut rng);
    let painter = CuePainter { spec: &spec.cues, span };

    let prompt_frames = lead_in..lead_in + prompt;
    let start = prompt_frames.end + gap;
    let scp = start + to_scp;
    let build = |variant: Variant, mut rng: ChaCha8Rng| {
        let end = match variant {
            Variant::Short => scp,
            Variant::Long => scp + continuation,
        };
        let len = end + tail;
        let mut grid = VaGrid::silent(fr, len);
        let mut cues = CueTracks::silent(fr, len, &CUE_NAMES);
        grid.set(Speaker::B, prompt_frames.clone(), true);
        grid.set(Speaker::A, start..end, true);
        let b = Speaker::B.index();
        painter.paint(&mut cues, Speaker::B, prompt_frames.clone(), baselines[b], 1.0, Some(prompt_frames.end - span), &mut rng);
        let a = Speaker::A.index();
        painter.paint(&mut cues, Speaker::A, start..end, baselines[a], 1.0, Some(end - span.min(end - start)), &mut rng);
        let scp_time = fr.time_of(scp);
        let mut query = ScpQuery::new(scp_time, scp_time, Speaker::A);
        query.utterance_start = fr.time_of(start);
        ScpSample { grid, cues, query }
    };
    let long = build(Variant::Long, rng.clone());
    let short = build(Variant::Short, rng);
    Ok(ScpPair { short, long })
}

/// `count` pairs with seeds `seed, seed + 1, ...`.
pub fn synth_scp_pairs(spec: &SynthDialogSpec, count: usize, seed: u64) -> Result<Vec<ScpPair>, HarnessError> {
    (0..count as u64).map(|i| synth_scp_pair(spec, seed.wrapping_add(i))).collect()
}
