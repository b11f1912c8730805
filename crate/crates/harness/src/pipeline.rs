//! Manifest loading, perturbations, training and zero-shot evaluation of a
//! checkpoint over a set of dialogs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vap_core::events::extract_events;
use vap_core::io::read_segments;
use vap_core::va::rasterize_va;
use vap_core::zeroshot::{score_events, scp_regions, Confusion, EventScore, ScpQuery, ScpRegions};
use vap_core::{AggregationConfig, EvalReport, EventConfig, FrameRate, Metric, Speaker, VaGrid, VaSegment};
use vap_dsp::io::{read_alignment, read_wav};
use vap_dsp::{
    estimate_f0, flatten_f0, flatten_intensity, low_pass, mix, scale_durations, shift_f0, PhoneAlignment, Transformed,
    Waveform,
};
use vap_model::{
    frame_labels, frontend, predict_dialog, segment_dialog, split_train_valid, train, Checkpoint, Features, Frontend,
    FrontendInput, ModelConfig, Segment, TrainConfig, TrainOutcome,
};

use crate::cues::{ablate_cue, offset_cue, CueTracks, PITCH};
use crate::scp::{ScpPair, Variant};
use crate::synth::SynthDialog;
use crate::HarnessError;

/// Search band for F0 estimation before pitch perturbations, Hz.
pub const F0_BAND: (f64, f64) = (60.0, 400.0);

/// A manipulation applied to a dialog before it reaches the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Perturbation {
    Original,
    /// Cue channel replaced by its per-speaker mean.
    AblateCue { cue: String },
    /// Constant added to the active frames of a cue channel.
    OffsetCue { cue: String, delta: f64 },
    F0Flat,
    F0Shift { factor: f64 },
    IntensityFlat,
    LowPass { cutoff: f64 },
    /// Every phone set to its mean duration (needs an alignment and phone
    /// means).
    DurationAvg,
}

impl Perturbation {
    /// The cue-channel analog of scaling F0 by `factor`.
    pub fn cue_f0_shift(factor: f64) -> Self {
        Perturbation::OffsetCue { cue: PITCH.into(), delta: factor.log2() }
    }

    pub fn is_original(&self) -> bool {
        *self == Perturbation::Original
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Original => write!(f, "original"),
            Perturbation::AblateCue { cue } => write!(f, "ablate:{cue}"),
            Perturbation::OffsetCue { cue, delta } => write!(f, "offset:{cue}:{delta}"),
            Perturbation::F0Flat => write!(f, "f0_flat"),
            Perturbation::F0Shift { factor } => write!(f, "f0_shift:{factor}"),
            Perturbation::IntensityFlat => write!(f, "intensity_flat"),
            Perturbation::LowPass { cutoff } => write!(f, "low_pass:{cutoff}"),
            Perturbation::DurationAvg => write!(f, "duration_avg"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Invalid(format!("unknown perturbation `{s}`"));
        let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        let parts: Vec<&str> = s.split(':').collect();
        Ok(match parts.as_slice() {
            ["original"] => Perturbation::Original,
            ["ablate", cue] if !cue.is_empty() => Perturbation::AblateCue { cue: cue.to_string() },
            ["offset", cue, delta] if !cue.is_empty() => Perturbation::OffsetCue { cue: cue.to_string(), delta: num(delta)? },
            ["f0_flat"] => Perturbation::F0Flat,
            ["f0_shift"] => Perturbation::F0Shift { factor: 0.9 },
            ["f0_shift", k] => Perturbation::F0Shift { factor: num(k)? },
            ["intensity_flat"] => Perturbation::IntensityFlat,
            ["low_pass"] => Perturbation::LowPass { cutoff: 400.0 },
            ["low_pass", c] => Perturbation::LowPass { cutoff: num(c)? },
            ["duration_avg"] => Perturbation::DurationAvg,
            _ => return Err(bad()),
        })
    }
}

impl TryFrom<String> for Perturbation {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Perturbation> for String {
    fn from(p: Perturbation) -> String {
        p.to_string()
    }
}

/// One manifest line. Relative paths are resolved against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogEntry {
    #[serde(default)]
    pub name: Option<String>,
    /// VA annotation (segments as JSON or CSV).
    pub va: PathBuf,
    /// Mono or two-channel (A, B) WAV.
    #[serde(default)]
    pub audio: Option<PathBuf>,
    /// Cue CSV for `va_only` models or 100 Hz embedding CSV for
    /// `external_embeddings` models.
    #[serde(default)]
    pub features: Option<PathBuf>,
    /// Phone alignment for the duration perturbation.
    #[serde(default)]
    pub alignment: Option<PathBuf>,
    /// Dialog length in seconds; defaults to the audio length or the last
    /// segment end.
    #[serde(default)]
    pub duration: Option<f64>,
}

impl DialogEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.va.display().to_string())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.va);
        [&mut self.audio, &mut self.features, &mut self.alignment].into_iter().flatten().for_each(fix);
    }
}

/// Reads a JSON list of dialog entries.
pub fn read_manifest<T: for<'de> Deserialize<'de> + ResolvePaths>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::from(e).at("manifest", path))?;
    let mut entries: Vec<T> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| HarnessError::from(e).at("manifest", path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries.iter_mut().for_each(|e| e.resolve_paths(base));
    Ok(entries)
}

pub trait ResolvePaths {
    fn resolve_paths(&mut self, base: &Path);
}

impl ResolvePaths for DialogEntry {
    fn resolve_paths(&mut self, base: &Path) {
        self.resolve(base);
    }
}

/// What a dialog carries besides its voice activity.
#[derive(Debug, Clone, PartialEq)]
pub enum DialogSource {
    VaOnly,
    Cues(CueTracks),
    Audio(Vec<Waveform>),
    Embeddings(Array2<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialog {
    pub name: String,
    pub grid: VaGrid,
    pub source: DialogSource,
    pub alignment: Option<PhoneAlignment>,
}

impl Dialog {
    pub fn from_synth(name: impl Into<String>, d: &SynthDialog) -> Self {
        Dialog { name: name.into(), grid: d.grid.clone(), source: DialogSource::Cues(d.cues.clone()), alignment: None }
    }
}

fn read_embeddings(path: &Path) -> Result<Array2<f32>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let mut rows: Vec<f32> = Vec::new();
    let mut dims = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if *dims.get_or_insert(rec.len()) != rec.len() {
            return Err(HarnessError::Invalid(format!("embedding row {} has {} columns", i + 1, rec.len())));
        }
        for v in rec.iter() {
            rows.push(v.parse().map_err(|_| HarnessError::Invalid(format!("embedding row {}: bad value `{v}`", i + 1)))?);
        }
    }
    let dims = dims.unwrap_or(0);
    Array2::from_shape_vec((rows.len() / dims.max(1), dims), rows).map_err(|e| HarnessError::Invalid(e.to_string()))
}

/// Loads one manifest entry for a model with the given configuration.
pub fn load_dialog(entry: &DialogEntry, config: &ModelConfig) -> Result<Dialog, HarnessError> {
    let fr = config.frame_rate;
    let segments = read_segments(&entry.va).map_err(|e| HarnessError::from(e).at("load", &entry.va))?;
    let audio = match &entry.audio {
        Some(p) => Some(read_wav(p, Speaker::A).map_err(|e| HarnessError::from(e).at("load", p))?),
        None => None,
    };
    let duration = entry
        .duration
        .or_else(|| audio.as_ref().map(|w| w.iter().map(Waveform::duration).fold(0.0, f64::max)))
        .unwrap_or_else(|| segments.iter().map(|s| s.end).fold(0.0, f64::max));
    let grid = rasterize_va(&segments, fr, duration).map_err(|e| HarnessError::from(e).at("load", &entry.va))?;
    let source = match (config.frontend, audio, &entry.features) {
        (Frontend::LogMel { .. }, Some(waves), _) => DialogSource::Audio(waves),
        (Frontend::VaOnly { .. }, _, Some(p)) => {
            let file = File::open(p).map_err(|e| HarnessError::from(e).at("load", p))?;
            DialogSource::Cues(CueTracks::read_csv(BufReader::new(file), fr).map_err(|e| e.at("load", p))?)
        }
        (Frontend::VaOnly { .. }, _, None) => DialogSource::VaOnly,
        (Frontend::ExternalEmbeddings { .. }, _, Some(p)) => {
            DialogSource::Embeddings(read_embeddings(p).map_err(|e| e.at("load", p))?)
        }
        (f, _, _) => {
            return Err(HarnessError::Invalid(format!("entry has no input for the {f:?} frontend")).at("load", &entry.va))
        }
    };
    let alignment = match &entry.alignment {
        Some(p) => Some(read_alignment(p).map_err(|e| HarnessError::from(e).at("load", p))?),
        None => None,
    };
    Ok(Dialog { name: entry.display_name(), grid, source, alignment })
}

/// Segments covering the frames where `speaker` (or anyone, for `None`)
/// is active.
fn active_segments(grid: &VaGrid, speaker: Option<Speaker>) -> Vec<VaSegment> {
    let fr = grid.frame_rate();
    let any: Vec<bool> = (0..grid.len())
        .map(|t| match speaker {
            Some(s) => grid.is_active(s, t),
            None => grid.is_active(Speaker::A, t) || grid.is_active(Speaker::B, t),
        })
        .collect();
    let mut out = Vec::new();
    let mut t = 0;
    while t < any.len() {
        if !any[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < any.len() && any[t] {
            t += 1;
        }
        out.push(VaSegment::new(speaker.unwrap_or(Speaker::A), fr.time_of(start), fr.time_of(t)));
    }
    out
}

/// Applies an audio perturbation to one channel.
pub fn perturb_wave(
    wave: &Waveform,
    va: &[VaSegment],
    p: &Perturbation,
    alignment: Option<&PhoneAlignment>,
    phone_means: Option<&BTreeMap<String, f64>>,
) -> Result<Transformed, HarnessError> {
    Ok(match p {
        Perturbation::Original => Transformed { wave: wave.clone(), warnings: Vec::new() },
        Perturbation::F0Flat => flatten_f0(wave, &estimate_f0(wave, F0_BAND.0, F0_BAND.1)?, va)?,
        Perturbation::F0Shift { factor } => shift_f0(wave, &estimate_f0(wave, F0_BAND.0, F0_BAND.1)?, *factor)?,
        Perturbation::IntensityFlat => flatten_intensity(wave, va)?,
        Perturbation::LowPass { cutoff } => low_pass(wave, *cutoff)?,
        Perturbation::DurationAvg => {
            let (Some(alignment), Some(means)) = (alignment, phone_means) else {
                return Err(HarnessError::Invalid("duration_avg needs a phone alignment and phone means".into()));
            };
            let mut out = scale_durations(wave, alignment, means)?;
            // keep the original length so the annotation still lines up
            out.wave.samples.resize(wave.len(), 0.0);
            out
        }
        Perturbation::AblateCue { .. } | Perturbation::OffsetCue { .. } => {
            return Err(HarnessError::Invalid(format!("{p} applies to cue channels, not audio")))
        }
    })
}

/// Applies a cue perturbation.
pub fn perturb_cues(cues: &CueTracks, p: &Perturbation) -> Result<CueTracks, HarnessError> {
    match p {
        Perturbation::Original => Ok(cues.clone()),
        Perturbation::AblateCue { cue } => ablate_cue(cues, cue),
        Perturbation::OffsetCue { cue, delta } => offset_cue(cues, cue, *delta),
        other => Err(HarnessError::Invalid(format!("{other} needs audio input"))),
    }
}

/// Model input features of a dialog after a perturbation.
pub fn dialog_features(
    dialog: &Dialog,
    p: &Perturbation,
    config: &ModelConfig,
    phone_means: Option<&BTreeMap<String, f64>>,
) -> Result<Features<f32>, HarnessError> {
    let grid = &dialog.grid;
    let original_only = |what: &str| {
        if p.is_original() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(format!("{p} cannot be applied to {what} input")))
        }
    };
    let features = match (&dialog.source, config.frontend) {
        (DialogSource::VaOnly, Frontend::VaOnly { .. }) => {
            original_only("VA-only")?;
            frontend(FrontendInput::VaOnly { grid, extra: None }, config)?
        }
        (DialogSource::Cues(cues), Frontend::VaOnly { extra_dims }) => {
            let cues = perturb_cues(cues, p)?;
            let extra = (extra_dims > 0).then(|| cues.to_features());
            frontend(FrontendInput::VaOnly { grid, extra }, config)?
        }
        (DialogSource::Audio(waves), Frontend::LogMel { .. }) => {
            let mut out = Vec::with_capacity(waves.len());
            for w in waves {
                let speaker = (waves.len() == 2).then_some(w.speaker);
                let t = perturb_wave(w, &active_segments(grid, speaker), p, dialog.alignment.as_ref(), phone_means)?;
                for warning in &t.warnings {
                    log::warn!("{}: {p}: {warning}", dialog.name);
                }
                out.push(t.wave);
            }
            let samples = match out.as_slice() {
                [a, b] => mix(a, b)?,
                [a] => a.samples.clone(),
                _ => return Err(HarnessError::Invalid("audio must have one or two channels".into())),
            };
            frontend(FrontendInput::Audio { grid, samples: &samples, sample_rate: out[0].sample_rate }, config)?
        }
        (DialogSource::Embeddings(rows), Frontend::ExternalEmbeddings { .. }) => {
            original_only("embedding")?;
            frontend(FrontendInput::Embeddings { grid, rows: rows.clone() }, config)?
        }
        (_, f) => return Err(HarnessError::Invalid(format!("dialog input does not fit the {f:?} frontend"))),
    };
    Ok(features)
}

/// Training segments of every dialog (unperturbed).
pub fn training_segments(dialogs: &[Dialog], config: &ModelConfig) -> Result<Vec<Segment>, HarnessError> {
    let per_dialog: Vec<Result<Vec<Segment>, HarnessError>> = dialogs
        .par_iter()
        .map(|d| {
            let features = dialog_features(d, &Perturbation::Original, config, None).map_err(|e| e.at("features", &d.name))?;
            let labels = frame_labels(&d.grid, config)?;
            Ok(segment_dialog(&features, &labels, config)?)
        })
        .collect();
    let mut out = Vec::new();
    for segs in per_dialog {
        out.extend(segs?);
    }
    Ok(out)
}

/// Splits dialogs (not segments) into training and validation sets and
/// trains a model.
pub fn train_on_dialogs(
    dialogs: &[Dialog],
    config: &ModelConfig,
    tc: &TrainConfig,
    valid_fraction: f64,
) -> Result<TrainOutcome, HarnessError> {
    // small corpora still hold out one dialog
    let n = dialogs.len();
    let valid_fraction = if valid_fraction > 0.0 && n >= 2 { valid_fraction.max(1.0 / n as f64) } else { valid_fraction };
    let (train_idx, valid_idx) = split_train_valid((0..n).collect(), valid_fraction, tc.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| dialogs[i].clone()).collect::<Vec<_>>();
    let train_set = training_segments(&pick(&train_idx), config)?;
    let valid_set = training_segments(&pick(&valid_idx), config)?;
    log::info!(
        "training on {} dialogs ({} segments), validating on {} ({} segments)",
        train_idx.len(),
        train_set.len(),
        valid_idx.len(),
        valid_set.len()
    );
    Ok(train(config, &train_set, &valid_set, tc)?)
}

/// SHA-256 of the serialized checkpoint.
pub fn checkpoint_id(checkpoint: &Checkpoint<f32>) -> String {
    Sha256::digest(checkpoint.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub events: EventConfig,
    pub aggregation: AggregationConfig,
    /// Seeds negative-region sampling (dialog `i` uses `seed + i`).
    pub seed: u64,
    #[serde(skip)]
    pub phone_means: Option<BTreeMap<String, f64>>,
    /// When set, the report so far is written here after every
    /// perturbation.
    #[serde(skip)]
    pub flush_dir: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            events: EventConfig::default(),
            aggregation: AggregationConfig::default(),
            seed: 0,
            phone_means: None,
            flush_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub checkpoint_id: String,
    pub checkpoint_epoch: usize,
    pub model: ModelConfig,
    pub aggregation: AggregationConfig,
    pub events: EventConfig,
    pub dialogs: Vec<String>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub perturbation: Perturbation,
    pub reports: Vec<EvalReport>,
    /// Per-event scores by dialog name; not part of the JSON report.
    #[serde(skip)]
    pub scores: Vec<(String, Vec<EventScore>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpResult {
    pub perturbation: Perturbation,
    pub variant: Variant,
    pub count: usize,
    /// Region means over all utterances.
    pub mean: ScpRegions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub results: Vec<PerturbationResult>,
    #[serde(default)]
    pub scp: Vec<ScpResult>,
}

impl RunReport {
    pub fn report(&self, p: &Perturbation, metric: Metric) -> Option<&EvalReport> {
        self.results.iter().find(|r| r.perturbation == *p)?.reports.iter().find(|r| r.metric == metric)
    }

    pub fn scp_result(&self, p: &Perturbation, variant: Variant) -> Option<&ScpResult> {
        self.scp.iter().find(|r| r.perturbation == *p && r.variant == variant)
    }
}

fn check_rate(dialog: &Dialog, fr: FrameRate) -> Result<(), HarnessError> {
    if dialog.grid.frame_rate() != fr {
        return Err(HarnessError::Invalid(format!(
            "dialog at {} Hz, checkpoint at {} Hz",
            dialog.grid.frame_rate(),
            fr
        ))
        .at("load", &dialog.name));
    }
    Ok(())
}

/// `Original` first, then the requested perturbations without repeats.
fn perturbation_list(perturbations: &[Perturbation]) -> Vec<Perturbation> {
    let mut list = vec![Perturbation::Original];
    for p in perturbations {
        if !list.contains(p) {
            list.push(p.clone());
        }
    }
    list
}

/// Evaluates a checkpoint on every dialog under every perturbation.
pub fn run_pipeline(
    dialogs: &[Dialog],
    checkpoint: &Checkpoint<f32>,
    perturbations: &[Perturbation],
    metrics: &[Metric],
    opts: &PipelineOptions,
) -> Result<RunReport, HarnessError> {
    let config = &checkpoint.model.config;
    opts.aggregation.validate()?;
    for d in dialogs {
        check_rate(d, config.frame_rate)?;
    }
    let events: Vec<_> = dialogs
        .iter()
        .enumerate()
        .map(|(i, d)| extract_events(&d.grid, &opts.events, &mut ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64))))
        .collect();
    let mut report = RunReport {
        provenance: Provenance {
            seed: opts.seed,
            checkpoint_id: checkpoint_id(checkpoint),
            checkpoint_epoch: checkpoint.metadata.epoch,
            model: config.clone(),
            aggregation: opts.aggregation.clone(),
            events: opts.events,
            dialogs: dialogs.iter().map(|d| d.name.clone()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        results: Vec::new(),
        scp: Vec::new(),
    };
    for p in perturbation_list(perturbations) {
        let per_dialog: Vec<Result<Vec<Vec<EventScore>>, HarnessError>> = dialogs
            .par_iter()
            .zip(events.par_iter())
            .map(|(d, ev)| {
                let features = dialog_features(d, &p, config, opts.phone_means.as_ref()).map_err(|e| e.at("features", &d.name))?;
                let probs = predict_dialog(&checkpoint.model, &features).map_err(|e| HarnessError::from(e).at("predict", &d.name))?;
                metrics
                    .iter()
                    .map(|&m| {
                        score_events(ev, &probs, m, &opts.aggregation).map_err(|e| HarnessError::from(e).at("evaluate", &d.name))
                    })
                    .collect()
            })
            .collect();
        let mut totals = vec![Confusion::default(); metrics.len()];
        let mut all_scores = Vec::new();
        for (d, r) in dialogs.iter().zip(per_dialog) {
            for (t, scores) in totals.iter_mut().zip(r?) {
                scores.iter().for_each(|s| t.add(s.label, s.decision));
                all_scores.push((d.name.clone(), scores));
            }
        }
        let reports = metrics
            .iter()
            .zip(totals)
            .map(|(&m, c)| EvalReport::from_confusion(m, c, opts.aggregation.threshold))
            .collect();
        report.results.push(PerturbationResult { perturbation: p, reports, scores: all_scores });
        if let Some(dir) = &opts.flush_dir {
            crate::report::write_report(&report, dir)?;
        }
    }
    Ok(report)
}

/// One utterance for completion-point analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpInput {
    pub dialog: Dialog,
    pub variant: Variant,
    pub query: ScpQuery,
}

impl ScpInput {
    pub fn from_pairs(pairs: &[ScpPair]) -> Vec<ScpInput> {
        pairs
            .iter()
            .enumerate()
            .flat_map(|(i, pair)| {
                [Variant::Short, Variant::Long].map(|v| {
                    let s = pair.get(v);
                    ScpInput {
                        dialog: Dialog {
                            name: format!("pair{i:03}_{}", v.name()),
                            grid: s.grid.clone(),
                            source: DialogSource::Cues(s.cues.clone()),
                            alignment: None,
                        },
                        variant: v,
                        query: s.query,
                    }
                })
            })
            .collect()
    }
}

/// Mean shift probability per region, variant and perturbation.
pub fn run_scp(
    inputs: &[ScpInput],
    checkpoint: &Checkpoint<f32>,
    perturbations: &[Perturbation],
    opts: &PipelineOptions,
) -> Result<Vec<ScpResult>, HarnessError> {
    let config = &checkpoint.model.config;
    for i in inputs {
        check_rate(&i.dialog, config.frame_rate)?;
    }
    let mut out = Vec::new();
    for p in perturbation_list(perturbations) {
        let regions: Vec<Result<ScpRegions, HarnessError>> = inputs
            .par_iter()
            .map(|i| {
                let d = &i.dialog;
                let features = dialog_features(d, &p, config, opts.phone_means.as_ref()).map_err(|e| e.at("features", &d.name))?;
                let probs = predict_dialog(&checkpoint.model, &features).map_err(|e| HarnessError::from(e).at("predict", &d.name))?;
                scp_regions(&probs, &i.query, &opts.aggregation).map_err(|e| HarnessError::from(e).at("regions", &d.name))
            })
            .collect();
        let regions: Vec<ScpRegions> = regions.into_iter().collect::<Result<_, _>>()?;
        for v in [Variant::Short, Variant::Long] {
            let own: Vec<&ScpRegions> = inputs.iter().zip(&regions).filter(|(i, _)| i.variant == v).map(|(_, r)| r).collect();
            if own.is_empty() {
                continue;
            }
            let n = own.len() as f64;
            let mean = ScpRegions {
                hold: own.iter().map(|r| r.hold).sum::<f64>() / n,
                predictive: own.iter().map(|r| r.predictive).sum::<f64>() / n,
                reactive: own.iter().map(|r| r.reactive).sum::<f64>() / n,
            };
            out.push(ScpResult { perturbation: p.clone(), variant: v, count: own.len(), mean });
        }
    }
    Ok(out)
}

/// Manifest line for completion-point analysis of recorded utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpEntry {
    #[serde(flatten)]
    pub dialog: DialogEntry,
    pub item: u32,
    pub variant: Variant,
    pub speaker: Speaker,
    pub utterance_start: f64,
    pub scp_time: f64,
    pub word_end: f64,
    #[serde(default = "default_predictive_span")]
    pub predictive_span: f64,
}

fn default_predictive_span() -> f64 {
    0.2
}

impl ResolvePaths for ScpEntry {
    fn resolve_paths(&mut self, base: &Path) {
        self.dialog.resolve(base);
    }
}

impl ScpEntry {
    pub fn load(&self, config: &ModelConfig) -> Result<ScpInput, HarnessError> {
        let mut dialog = load_dialog(&self.dialog, config)?;
        if self.dialog.name.is_none() {
            dialog.name = format!("item{}_{}", self.item, self.variant.name());
        }
        let query = ScpQuery {
            utterance_start: self.utterance_start,
            scp_time: self.scp_time,
            word_end: self.word_end,
            prev_speaker: self.speaker,
            predictive_span: self.predictive_span,
        };
        Ok(ScpInput { dialog, variant: self.variant, query })
    }
}
