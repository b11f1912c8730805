use ndarray::{Array2, ArrayView2, NdFloat};
use vap_core::NUM_CLASSES;

use crate::layers::cast;
use crate::ModelError;

/// Summed cross-entropy over labelled frames plus its gradient with
/// respect to the logits. Unlabelled frames (`None`) contribute nothing.
pub fn cross_entropy_sum<F: NdFloat>(
    logits: ArrayView2<F>,
    labels: &[Option<usize>],
) -> Result<(F, usize, Array2<F>), ModelError> {
    if logits.nrows() != labels.len() || logits.ncols() != NUM_CLASSES {
        return Err(ModelError::Shape(format!(
            "logits {:?} for {} labels",
            logits.dim(),
            labels.len()
        )));
    }
    if let Some((frame, &Some(label))) = labels.iter().enumerate().find(|(_, l)| l.is_some_and(|c| c >= NUM_CLASSES)) {
        return Err(ModelError::LabelOutOfRange { frame, label });
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = F::zero();
    let mut count = 0;
    for ((row, mut g), label) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let Some(c) = *label else { continue };
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let sum = row.iter().map(|&z| (z - max).exp()).fold(F::zero(), |a, b| a + b);
        let log_z = max + sum.ln();
        total += log_z - row[c];
        for (gi, &z) in g.iter_mut().zip(row.iter()) {
            *gi = (z - log_z).exp();
        }
        g[c] -= F::one();
        count += 1;
    }
    Ok((total, count, grad))
}

/// Mean cross-entropy over frames.
pub fn vap_loss<F: NdFloat>(logits: ArrayView2<F>, labels: &[usize]) -> Result<F, ModelError> {
    let labels: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
    let (total, n, _) = cross_entropy_sum(logits, &labels)?;
    if n == 0 {
        return Err(ModelError::Shape("no frames to score".into()));
    }
    Ok(total / cast::<F>(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_256() {
        let logits = Array2::<f64>::zeros((7, 256));
        let l = vap_loss(logits.view(), &[0, 5, 255, 17, 3, 3, 100]).unwrap();
        assert!((l - 256f64.ln()).abs() < 1e-12);
        assert!((256f64.ln() - 5.545).abs() < 1e-3);
    }

    #[test]
    fn confident_logits_give_zero_loss() {
        let mut logits = Array2::<f64>::zeros((3, 256));
        for (t, &c) in [4usize, 200, 9].iter().enumerate() {
            logits[[t, c]] = 60.0;
        }
        assert!(vap_loss(logits.view(), &[4, 200, 9]).unwrap() < 1e-20);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let logits = Array2::<f32>::zeros((2, 256));
        assert!(matches!(
            vap_loss(logits.view(), &[1, 256]),
            Err(ModelError::LabelOutOfRange { frame: 1, label: 256 })
        ));
    }

    #[test]
    fn masked_frames_are_ignored() {
        let logits = Array2::from_shape_fn((3, 256), |(t, c)| ((t * 31 + c * 7) % 13) as f64 * 0.1);
        let (sum, n, g) = cross_entropy_sum(logits.view(), &[Some(3), None, Some(8)]).unwrap();
        assert_eq!(n, 2);
        assert!(g.row(1).iter().all(|&v| v == 0.0));
        assert!(sum > 0.0);
        for t in [0, 2] {
            assert!(g.row(t).sum().abs() < 1e-12);
        }
    }
}
