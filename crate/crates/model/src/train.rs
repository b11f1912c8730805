use std::time::Instant;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vap_core::va::encode_all;
use vap_core::{ProbSequence, VaGrid};

use crate::frontend::segment_spans;
use crate::loss::cross_entropy_sum;
use crate::optim::{clip_grad_norm, AdamW, EarlyStopping, Verdict};
use crate::{Checkpoint, Features, ModelConfig, ModelError, TrainingMetadata, VapModel};

/// One training sequence; `None` labels are excluded from the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub features: Features<f32>,
    pub labels: Vec<Option<usize>>,
}

/// Projection class of every frame; frames without a full future window
/// are unlabelled.
pub fn frame_labels(grid: &VaGrid, config: &ModelConfig) -> Result<Vec<Option<usize>>, ModelError> {
    let mut labels: Vec<Option<usize>> = encode_all(grid, &config.bins)?.into_iter().map(Some).collect();
    labels.resize(grid.len(), None);
    Ok(labels)
}

/// Cuts one dialog into context-length segments. Frames a segment shares
/// with its predecessor are unlabelled so each frame is scored once.
pub fn segment_dialog(
    features: &Features<f32>,
    labels: &[Option<usize>],
    config: &ModelConfig,
) -> Result<Vec<Segment>, ModelError> {
    if labels.len() < features.frames() {
        return Err(ModelError::Shape(format!("{} labels for {} frames", labels.len(), features.frames())));
    }
    Ok(segment_spans(features.frames(), config.context_frames(), config.overlap_frames())
        .into_iter()
        .map(|(span, shared)| {
            let mut l = labels[span.clone()].to_vec();
            l[..shared].iter_mut().for_each(|x| *x = None);
            Segment { features: features.slice(span, config.stride()), labels: l }
        })
        .collect())
}

/// Runs a whole dialog through the model in overlapping context windows
/// and returns one distribution per frame.
pub fn predict_dialog(model: &VapModel<f32>, features: &Features<f32>) -> Result<ProbSequence, ModelError> {
    let cfg = &model.config;
    let t = features.frames();
    let mut logits = Array2::<f64>::zeros((t, vap_core::NUM_CLASSES));
    for (span, shared) in segment_spans(t, cfg.context_frames(), cfg.overlap_frames()) {
        let out = model.forward(&features.slice(span.clone(), cfg.stride()))?;
        logits
            .slice_mut(s![span.start + shared..span.end, ..])
            .assign(&out.slice(s![shared.., ..]).mapv(f64::from));
    }
    let flat: Vec<f64> = logits.iter().copied().collect();
    Ok(ProbSequence::from_logits(cfg.frame_rate, &flat)?)
}

/// Mean cross-entropy over all labelled frames, dropout off.
pub fn evaluate_loss(model: &VapModel<f32>, segments: &[Segment]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut n = 0;
    for seg in segments {
        let logits = model.forward(&seg.features)?;
        let (sum, count, _) = cross_entropy_sum(logits.view(), &seg.labels)?;
        total += sum as f64;
        n += count;
    }
    Ok(if n == 0 { f64::NAN } else { total / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Segments per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Wall-clock limit in seconds; 0 means none.
    pub time_budget: f64,
    /// Linear warmup length in optimizer steps.
    pub warmup_steps: usize,
    /// Cosine-decay the rate to zero over `max_epochs` (constant otherwise).
    pub cosine_decay: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Learning rate for optimizer step `step` (0-based) out of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let warm = if step < self.warmup_steps { (step + 1) as f64 / self.warmup_steps as f64 } else { 1.0 };
        let decay = if self.cosine_decay && total > self.warmup_steps {
            let p = (step.saturating_sub(self.warmup_steps)) as f64 / (total - self.warmup_steps) as f64;
            0.5 * (1.0 + (std::f64::consts::PI * p.min(1.0)).cos())
        } else {
            1.0
        };
        self.lr * warm * decay
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            grad_clip: 1.0,
            time_budget: 0.0,
            warmup_steps: 0,
            cosine_decay: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
    TimeBudget,
    /// Loss or activations went non-finite; the last good weights are kept.
    Diverged { epoch: usize, detail: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights of the best validation epoch.
    pub checkpoint: Checkpoint<f32>,
    pub history: Vec<EpochStats>,
    pub stop: StopReason,
}

/// Deterministic split of `items` into (train, validation).
pub fn split_train_valid<T>(mut items: Vec<T>, valid_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((items.len() as f64 * valid_fraction).round() as usize).min(items.len().saturating_sub(1));
    let valid = items.split_off(items.len() - n_valid);
    (items, valid)
}

/// One optimizer epoch; returns the mean training loss.
fn run_epoch(
    model: &mut VapModel<f32>,
    opt: &mut AdamW<f32>,
    train: &[Segment],
    tc: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ModelError> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut epoch_loss = 0.0;
    let mut epoch_frames = 0;
    let per_epoch = train.len().div_ceil(tc.batch_size.max(1));
    let total = per_epoch * tc.max_epochs;
    for batch in order.chunks(tc.batch_size.max(1)) {
        let frames: usize = batch.iter().map(|&i| train[i].labels.iter().flatten().count()).sum();
        if frames == 0 {
            continue;
        }
        let mut grads = model.zeros_like();
        let scale = 1.0 / frames as f32;
        for &i in batch {
            let seg = &train[i];
            let (logits, cache) = model.forward_cached(&seg.features, Some(&mut *rng))?;
            let (sum, _, mut dlogits) = cross_entropy_sum(logits.view(), &seg.labels)?;
            if !sum.is_finite() {
                return Err(ModelError::NonFinite { layer: "loss".into() });
            }
            epoch_loss += sum as f64;
            dlogits *= scale;
            model.backward(&cache, dlogits.view(), &mut grads);
        }
        epoch_frames += frames;
        if tc.grad_clip > 0.0 {
            let norm = clip_grad_norm(&mut grads, tc.grad_clip);
            if !norm.is_finite() {
                return Err(ModelError::NonFinite { layer: "gradients".into() });
            }
        }
        opt.lr = tc.lr_at(opt.steps() as usize, total);
        opt.step(model, &grads);
    }
    Ok(epoch_loss / epoch_frames.max(1) as f64)
}

/// Trains with AdamW and early stopping on validation loss, returning the
/// best-validation weights.
pub fn train(
    config: &ModelConfig,
    train: &[Segment],
    valid: &[Segment],
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if train.iter().all(|s| s.labels.iter().all(Option::is_none)) {
        return Err(ModelError::EmptyTrainingSet);
    }
    if valid.iter().all(|s| s.labels.iter().all(Option::is_none)) {
        return Err(ModelError::EmptyValidationSet);
    }
    let mut model = VapModel::<f32>::new(config.clone(), tc.seed)?;
    let mut opt = AdamW::new(&model, tc.lr, tc.weight_decay, tc.beta1, tc.beta2, tc.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(1));
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut best = Checkpoint {
        model: model.clone(),
        metadata: TrainingMetadata { epoch: 0, validation_loss: f64::NAN, train_loss: f64::NAN, seed: tc.seed },
    };
    let mut history = Vec::new();
    let started = Instant::now();
    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=tc.max_epochs {
        let t0 = Instant::now();
        let train_loss = match run_epoch(&mut model, &mut opt, train, tc, &mut rng) {
            Ok(l) => l,
            Err(ModelError::NonFinite { layer }) => {
                log::warn!("training diverged in epoch {epoch} ({layer}); keeping epoch {}", best.metadata.epoch);
                stop = StopReason::Diverged { epoch, detail: layer };
                break;
            }
            Err(e) => return Err(e),
        };
        let validation_loss = match evaluate_loss(&model, valid) {
            Ok(l) => l,
            Err(ModelError::NonFinite { layer }) => {
                stop = StopReason::Diverged { epoch, detail: layer };
                break;
            }
            Err(e) => return Err(e),
        };
        let stats = EpochStats { epoch, train_loss, validation_loss, seconds: t0.elapsed().as_secs_f64() };
        log::info!("epoch {epoch}: train {train_loss:.4} valid {validation_loss:.4} ({:.1} s)", stats.seconds);
        history.push(stats);
        let verdict = stopper.update(epoch, validation_loss);
        if verdict == Verdict::Improved {
            best = Checkpoint {
                model: model.clone(),
                metadata: TrainingMetadata { epoch, validation_loss, train_loss, seed: tc.seed },
            };
        }
        if verdict == Verdict::Stop {
            stop = StopReason::EarlyStopping;
            break;
        }
        if tc.time_budget > 0.0 && started.elapsed().as_secs_f64() >= tc.time_budget {
            stop = StopReason::TimeBudget;
            break;
        }
    }
    Ok(TrainOutcome { checkpoint: best, history, stop })
}
