use ndarray::{ArrayD, NdFloat, Zip};
use serde::{Deserialize, Serialize};

use crate::layers::cast;
use crate::VapModel;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: NdFloat> AdamW<F> {
    pub fn new(model: &VapModel<F>, lr: f64, weight_decay: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<ArrayD<F>> = model.tensors().iter().map(|(_, t)| ArrayD::zeros(t.raw_dim())).collect();
        AdamW { lr, beta1, beta2, eps, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut VapModel<F>, grads: &VapModel<F>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cast::<F>(self.beta1), cast::<F>(self.beta2));
        let c1 = cast::<F>(1.0 - self.beta1.powi(t));
        let c2 = cast::<F>(1.0 - self.beta2.powi(t));
        let lr = cast::<F>(self.lr);
        let decay = cast::<F>(1.0 - self.lr * self.weight_decay);
        let eps = cast::<F>(self.eps);
        let one = F::one();
        for (((_, mut p), (_, g)), (m, v)) in
            model.tensors_mut().into_iter().zip(grads.tensors()).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(&mut p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                *p = *p * decay - lr * update;
            });
        }
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<F: NdFloat>(grads: &mut VapModel<F>, max_norm: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .map(|(_, t)| t.iter().map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = cast::<F>(max_norm / norm);
        for (_, mut t) in grads.tensors_mut() {
            t.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Improved,
    NoImprovement,
    Stop,
}

/// Stops once validation loss has not improved for `patience` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, since_best: 0 }
    }

    /// Records the validation loss of `epoch`.
    pub fn update(&mut self, epoch: usize, loss: f64) -> Verdict {
        let improved = loss.is_finite() && self.best.is_none_or(|(_, b)| loss < b);
        if improved {
            self.best = Some((epoch, loss));
            self.since_best = 0;
            return Verdict::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            Verdict::Stop
        } else {
            Verdict::NoImprovement
        }
    }

    /// `(epoch, loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_at_epoch_three_stops_at_thirteen() {
        let mut es = EarlyStopping::new(10);
        let losses = [2.0, 1.5, 1.0, 1.2, 1.1, 1.3, 1.0, 1.4, 1.05, 1.2, 1.3, 1.1, 1.6, 0.5];
        let mut stopped = None;
        for (i, &l) in losses.iter().enumerate() {
            let epoch = i + 1;
            if es.update(epoch, l) == Verdict::Stop {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(13));
        assert_eq!(es.best(), Some((3, 1.0)));
    }

    #[test]
    fn nan_never_counts_as_improvement() {
        let mut es = EarlyStopping::new(2);
        assert_eq!(es.update(1, 1.0), Verdict::Improved);
        assert_eq!(es.update(2, f64::NAN), Verdict::NoImprovement);
        assert_eq!(es.update(3, f64::NAN), Verdict::Stop);
    }
}
