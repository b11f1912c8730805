//! Building blocks with explicit backward passes.
//!
//! Forward functions return whatever the backward pass needs; backward
//! functions accumulate parameter gradients into a same-shaped gradient
//! struct and return the input gradient.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const LN_EPS: f64 = 1e-5;

pub(crate) fn cast<F: NdFloat>(x: f64) -> F {
    F::from(x).expect("representable constant")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `[in x out]`
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: NdFloat> Linear<F> {
    pub fn init<R: Rng>(inputs: usize, outputs: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        Linear {
            w: Array2::from_shape_fn((inputs, outputs), |_| cast(normal.sample(rng))),
            b: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    pub fn backward(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) -> Array2<F> {
        grad.w += &x.t().dot(&dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn backward_params(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) {
        grad.w += &x.t().dot(&dy);
        grad.b += &dy.sum_axis(Axis(0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub g: Array1<F>,
    pub b: Array1<F>,
}

pub struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Array1<F>,
}

impl<F: NdFloat> LayerNorm<F> {
    pub fn new(dim: usize) -> Self {
        LayerNorm { g: Array1::ones(dim), b: Array1::zeros(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm { g: Array1::zeros(dim), b: Array1::zeros(dim) }
    }

    pub fn forward(&self, x: ArrayView2<F>) -> (Array2<F>, LnCache<F>) {
        let n = cast::<F>(x.ncols() as f64);
        let eps = cast::<F>(LN_EPS);
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b) / n;
            *r = F::one() / (var + eps).sqrt();
            let rs = *r;
            row.mapv_inplace(|v| v * rs);
        }
        let mut y = &xhat * &self.g;
        y += &self.b;
        (y, LnCache { xhat, rstd })
    }

    pub fn backward(&self, cache: &LnCache<F>, dy: ArrayView2<F>, grad: &mut LayerNorm<F>) -> Array2<F> {
        grad.g += &(&dy * &cache.xhat).sum_axis(Axis(0));
        grad.b += &dy.sum_axis(Axis(0));
        let n = cast::<F>(dy.ncols() as f64);
        let mut dx = &dy * &self.g;
        for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
            let mean = row.sum() / n;
            let proj = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).fold(F::zero(), |a, b| a + b) / n;
            row.zip_mut_with(&xh, |d, &h| *d = r * (*d - mean - h * proj));
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

pub fn gelu<F: NdFloat>(u: F) -> F {
    let half = cast::<F>(0.5);
    let inner = cast::<F>(GELU_C) * (u + cast::<F>(GELU_A) * u * u * u);
    half * u * (F::one() + inner.tanh())
}

pub fn gelu_grad<F: NdFloat>(u: F) -> F {
    let half = cast::<F>(0.5);
    let c = cast::<F>(GELU_C);
    let a = cast::<F>(GELU_A);
    let t = (c * (u + a * u * u * u)).tanh();
    half * (F::one() + t) + half * u * (F::one() - t * t) * c * (F::one() + cast::<F>(3.0) * a * u * u)
}

/// Inverted dropout mask: zeros with probability `p`, `1/(1-p)` otherwise.
pub fn dropout_mask<F: NdFloat, R: Rng>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<F> {
    let keep = cast::<F>(1.0 / (1.0 - p));
    Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < p { F::zero() } else { keep })
}

/// Causal multi-head self-attention with per-head linear distance biases.
pub struct AttentionCache<F> {
    pub qkv: Array2<F>,
    pub probs: Vec<Array2<F>>,
}

pub fn attention_forward<F: NdFloat>(qkv: Array2<F>, heads: usize, slopes: &[F]) -> (Array2<F>, AttentionCache<F>) {
    let t = qkv.nrows();
    let dim = qkv.ncols() / 3;
    let d = dim / heads;
    let scale = cast::<F>(1.0 / (d as f64).sqrt());
    let mut ctx = Array2::zeros((t, dim));
    let mut probs = Vec::with_capacity(heads);
    for (h, &m) in slopes.iter().enumerate().take(heads) {
        let q = qkv.slice(s![.., h * d..(h + 1) * d]);
        let k = qkv.slice(s![.., dim + h * d..dim + (h + 1) * d]);
        let v = qkv.slice(s![.., 2 * dim + h * d..2 * dim + (h + 1) * d]);
        let mut p = q.dot(&k.t());
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            let (live, masked) = row.split_at_mut(i + 1);
            let mut max = F::neg_infinity();
            for (j, x) in live.iter_mut().enumerate() {
                *x = *x * scale - m * cast::<F>((i - j) as f64);
                if *x > max {
                    max = *x;
                }
            }
            let mut sum = F::zero();
            for x in live.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            let inv = F::one() / sum;
            live.iter_mut().for_each(|x| *x *= inv);
            masked.fill(F::zero());
        }
        ctx.slice_mut(s![.., h * d..(h + 1) * d]).assign(&p.dot(&v));
        probs.push(p);
    }
    (ctx, AttentionCache { qkv, probs })
}

pub fn attention_backward<F: NdFloat>(cache: &AttentionCache<F>, dctx: ArrayView2<F>, heads: usize) -> Array2<F> {
    let qkv = &cache.qkv;
    let dim = qkv.ncols() / 3;
    let d = dim / heads;
    let scale = cast::<F>(1.0 / (d as f64).sqrt());
    let mut dqkv = Array2::zeros(qkv.raw_dim());
    for h in 0..heads {
        let q = qkv.slice(s![.., h * d..(h + 1) * d]);
        let k = qkv.slice(s![.., dim + h * d..dim + (h + 1) * d]);
        let v = qkv.slice(s![.., 2 * dim + h * d..2 * dim + (h + 1) * d]);
        let p = &cache.probs[h];
        let d_out = dctx.slice(s![.., h * d..(h + 1) * d]);
        let mut ds = d_out.dot(&v.t());
        let dv = p.t().dot(&d_out);
        for (i, (mut row, prow)) in ds.rows_mut().into_iter().zip(p.rows()).enumerate() {
            let row = row.as_slice_mut().expect("standard layout");
            let prow = &prow.as_slice().expect("standard layout")[..=i];
            let (live, masked) = row.split_at_mut(i + 1);
            let dot = live.iter().zip(prow).fold(F::zero(), |acc, (&g, &p)| acc + g * p);
            for (g, &p) in live.iter_mut().zip(prow) {
                *g = p * (*g - dot) * scale;
            }
            masked.fill(F::zero());
        }
        dqkv.slice_mut(s![.., h * d..(h + 1) * d]).assign(&ds.dot(&k));
        dqkv.slice_mut(s![.., dim + h * d..dim + (h + 1) * d]).assign(&ds.t().dot(&q));
        dqkv.slice_mut(s![.., 2 * dim + h * d..2 * dim + (h + 1) * d]).assign(&dv);
    }
    dqkv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &u in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(u + h) - gelu(u - h)) / (2.0 * h);
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::<f64>::new(4);
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 0.0, 1.0]];
        let (y, _) = ln.forward(x.view());
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn attention_rows_are_causal_distributions() {
        let qkv = Array2::from_shape_fn((5, 12), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5);
        let (_, cache) = attention_forward(qkv, 2, &[0.5, 0.25]);
        for p in &cache.probs {
            for (i, row) in p.rows().into_iter().enumerate() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().skip(i + 1).all(|&v| v == 0.0));
            }
        }
    }
}
