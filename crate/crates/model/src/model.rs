use ndarray::{Array2, ArrayView2, ArrayViewD, ArrayViewMutD, NdFloat, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vap_core::NUM_CLASSES;

use crate::layers::{
    attention_backward, attention_forward, cast, dropout_mask, gelu, gelu_grad, AttentionCache, LayerNorm, Linear,
    LnCache,
};
use crate::{Features, ModelConfig, ModelError};

const INIT_STD: f64 = 0.02;
/// Per-frame voice activity inputs and history features.
pub const VA_DIMS: usize = 2;
pub const HISTORY_DIMS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Block<F> {
    pub ln1: LayerNorm<F>,
    pub qkv: Linear<F>,
    pub proj: Linear<F>,
    pub ln2: LayerNorm<F>,
    pub ff1: Linear<F>,
    pub ff2: Linear<F>,
}

impl<F: NdFloat> Block<F> {
    fn init<R: Rng>(dim: usize, layers: usize, rng: &mut R) -> Self {
        let residual_std = INIT_STD / (2.0 * layers as f64).sqrt();
        Block {
            ln1: LayerNorm::new(dim),
            qkv: Linear::init(dim, 3 * dim, INIT_STD, rng),
            proj: Linear::init(dim, dim, residual_std, rng),
            ln2: LayerNorm::new(dim),
            ff1: Linear::init(dim, 4 * dim, INIT_STD, rng),
            ff2: Linear::init(4 * dim, dim, residual_std, rng),
        }
    }

    fn zeros(dim: usize) -> Self {
        Block {
            ln1: LayerNorm::zeros(dim),
            qkv: Linear::zeros(dim, 3 * dim),
            proj: Linear::zeros(dim, dim),
            ln2: LayerNorm::zeros(dim),
            ff1: Linear::zeros(dim, 4 * dim),
            ff2: Linear::zeros(4 * dim, dim),
        }
    }
}

/// Encoder projections, a stack of pre-norm causal transformer blocks and
/// the 256-way projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct VapModel<F> {
    pub config: ModelConfig,
    /// Strided projection of the speech inputs; absent when there are none.
    pub speech_proj: Option<Linear<F>>,
    pub va_proj: Linear<F>,
    pub hist_proj: Linear<F>,
    pub blocks: Vec<Block<F>>,
    pub ln_f: LayerNorm<F>,
    pub head: Linear<F>,
}

struct BlockCache<F> {
    ln1: LnCache<F>,
    a1: Array2<F>,
    attn: AttentionCache<F>,
    ctx: Array2<F>,
    drop1: Option<Array2<F>>,
    ln2: LnCache<F>,
    a2: Array2<F>,
    u: Array2<F>,
    g: Array2<F>,
    drop2: Option<Array2<F>>,
}

/// Activations kept by a training forward pass.
pub struct ForwardCache<F> {
    speech: Option<Array2<F>>,
    va: Array2<F>,
    history: Array2<F>,
    blocks: Vec<BlockCache<F>>,
    lnf: LnCache<F>,
    hf: Array2<F>,
}

fn check_finite<F: NdFloat>(x: &Array2<F>, layer: impl FnOnce() -> String) -> Result<(), ModelError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { layer: layer() })
    }
}

macro_rules! push_linear {
    ($out:ident, $prefix:expr, $l:expr, $view:ident) => {{
        $out.push((format!("{}.w", $prefix), $l.w.$view().into_dyn()));
        $out.push((format!("{}.b", $prefix), $l.b.$view().into_dyn()));
    }};
}

macro_rules! push_norm {
    ($out:ident, $prefix:expr, $l:expr, $view:ident) => {{
        $out.push((format!("{}.g", $prefix), $l.g.$view().into_dyn()));
        $out.push((format!("{}.b", $prefix), $l.b.$view().into_dyn()));
    }};
}

impl<F: NdFloat> VapModel<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = config.dim;
        let speech_in = config.stride() * config.frontend.speech_dims();
        Ok(VapModel {
            speech_proj: (speech_in > 0).then(|| Linear::init(speech_in, dim, INIT_STD, &mut rng)),
            va_proj: Linear::init(VA_DIMS, dim, INIT_STD, &mut rng),
            hist_proj: Linear::init(HISTORY_DIMS, dim, INIT_STD, &mut rng),
            blocks: (0..config.layers).map(|_| Block::init(dim, config.layers, &mut rng)).collect(),
            ln_f: LayerNorm::new(dim),
            head: Linear::init(dim, NUM_CLASSES, INIT_STD, &mut rng),
            config,
        })
    }

    /// All-zero parameters of the same shapes, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let dim = self.config.dim;
        VapModel {
            config: self.config.clone(),
            speech_proj: self.speech_proj.as_ref().map(|l| Linear::zeros(l.w.nrows(), dim)),
            va_proj: Linear::zeros(VA_DIMS, dim),
            hist_proj: Linear::zeros(HISTORY_DIMS, dim),
            blocks: (0..self.blocks.len()).map(|_| Block::zeros(dim)).collect(),
            ln_f: LayerNorm::zeros(dim),
            head: Linear::zeros(dim, NUM_CLASSES),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = Vec::new();
        if let Some(l) = &self.speech_proj {
            push_linear!(out, "encoder.speech_proj", l, view);
        }
        push_linear!(out, "encoder.va_proj", self.va_proj, view);
        push_linear!(out, "encoder.hist_proj", self.hist_proj, view);
        for (i, b) in self.blocks.iter().enumerate() {
            push_norm!(out, format!("blocks.{i}.ln1"), b.ln1, view);
            push_linear!(out, format!("blocks.{i}.attn.qkv"), b.qkv, view);
            push_linear!(out, format!("blocks.{i}.attn.proj"), b.proj, view);
            push_norm!(out, format!("blocks.{i}.ln2"), b.ln2, view);
            push_linear!(out, format!("blocks.{i}.ff1"), b.ff1, view);
            push_linear!(out, format!("blocks.{i}.ff2"), b.ff2, view);
        }
        push_norm!(out, "ln_f", self.ln_f, view);
        push_linear!(out, "head", self.head, view);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut out = Vec::new();
        if let Some(l) = &mut self.speech_proj {
            push_linear!(out, "encoder.speech_proj", l, view_mut);
        }
        push_linear!(out, "encoder.va_proj", self.va_proj, view_mut);
        push_linear!(out, "encoder.hist_proj", self.hist_proj, view_mut);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            push_norm!(out, format!("blocks.{i}.ln1"), b.ln1, view_mut);
            push_linear!(out, format!("blocks.{i}.attn.qkv"), b.qkv, view_mut);
            push_linear!(out, format!("blocks.{i}.attn.proj"), b.proj, view_mut);
            push_norm!(out, format!("blocks.{i}.ln2"), b.ln2, view_mut);
            push_linear!(out, format!("blocks.{i}.ff1"), b.ff1, view_mut);
            push_linear!(out, format!("blocks.{i}.ff2"), b.ff2, view_mut);
        }
        push_norm!(out, "ln_f", self.ln_f, view_mut);
        push_linear!(out, "head", self.head, view_mut);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Copies every parameter into another float type.
    pub fn cast<G: NdFloat>(&self) -> VapModel<G> {
        let mut out = VapModel::<G>::new(self.config.clone(), 0).expect("config already validated");
        for ((_, src), (_, mut dst)) in self.tensors().into_iter().zip(out.tensors_mut()) {
            Zip::from(&mut dst).and(&src).for_each(|d, &s| *d = cast(s.to_f64().expect("finite")));
        }
        out
    }

    fn slopes(&self) -> Vec<F> {
        self.config.alibi_slopes().into_iter().map(cast).collect()
    }

    /// Logits `[T x 256]` with dropout off.
    pub fn forward(&self, features: &Features<F>) -> Result<Array2<F>, ModelError> {
        self.forward_cached::<ChaCha8Rng>(features, None).map(|(logits, _)| logits)
    }

    /// Forward pass keeping activations for [`VapModel::backward`]. Dropout
    /// is applied when a random source is given.
    pub fn forward_cached<R: Rng>(
        &self,
        features: &Features<F>,
        mut rng: Option<&mut R>,
    ) -> Result<(Array2<F>, ForwardCache<F>), ModelError> {
        features.check(&self.config)?;
        let t = features.frames();
        if t > self.config.context_frames() {
            return Err(ModelError::TooLong { len: t, max: self.config.context_frames() });
        }
        let p = self.config.dropout;
        let speech = self.speech_proj.as_ref().map(|_| features.strided_speech(self.config.stride()));
        let mut x = self.va_proj.forward(features.va.view());
        x += &self.hist_proj.forward(features.history.view());
        if let (Some(l), Some(sp)) = (&self.speech_proj, &speech) {
            x += &l.forward(sp.view());
        }
        check_finite(&x, || "encoder".into())?;

        let slopes = self.slopes();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let (a1, ln1) = b.ln1.forward(x.view());
            let qkv = b.qkv.forward(a1.view());
            let (ctx, attn) = attention_forward(qkv, self.config.heads, &slopes);
            let mut h = b.proj.forward(ctx.view());
            let drop1 = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => Some(dropout_mask::<F, R>(h.dim(), p, r)),
                _ => None,
            };
            if let Some(m) = &drop1 {
                h *= m;
            }
            let x_mid = &x + &h;
            let (a2, ln2) = b.ln2.forward(x_mid.view());
            let u = b.ff1.forward(a2.view());
            let g = u.mapv(gelu);
            let mut f = b.ff2.forward(g.view());
            let drop2 = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => Some(dropout_mask::<F, R>(f.dim(), p, r)),
                _ => None,
            };
            if let Some(m) = &drop2 {
                f *= m;
            }
            let y = &x_mid + &f;
            check_finite(&y, || format!("block {i}"))?;
            caches.push(BlockCache { ln1, a1, attn, ctx, drop1, ln2, a2, u, g, drop2 });
            x = y;
        }
        let (hf, lnf) = self.ln_f.forward(x.view());
        let logits = self.head.forward(hf.view());
        check_finite(&logits, || "head".into())?;
        let cache = ForwardCache {
            speech,
            va: features.va.clone(),
            history: features.history.clone(),
            blocks: caches,
            lnf,
            hf,
        };
        Ok((logits, cache))
    }

    /// Accumulates parameter gradients for `dlogits` into `grads`.
    pub fn backward(&self, cache: &ForwardCache<F>, dlogits: ArrayView2<F>, grads: &mut VapModel<F>) {
        let dhf = self.head.backward(cache.hf.view(), dlogits, &mut grads.head);
        let mut dx = self.ln_f.backward(&cache.lnf, dhf.view(), &mut grads.ln_f);
        for ((b, c), g) in self.blocks.iter().zip(&cache.blocks).zip(grads.blocks.iter_mut()).rev() {
            // feed-forward branch
            let mut df = dx.clone();
            if let Some(m) = &c.drop2 {
                df *= m;
            }
            let mut du = b.ff2.backward(c.g.view(), df.view(), &mut g.ff2);
            Zip::from(&mut du).and(&c.u).for_each(|d, &u| *d *= gelu_grad(u));
            let da2 = b.ff1.backward(c.a2.view(), du.view(), &mut g.ff1);
            dx += &b.ln2.backward(&c.ln2, da2.view(), &mut g.ln2);
            // attention branch
            let mut dh = dx.clone();
            if let Some(m) = &c.drop1 {
                dh *= m;
            }
            let dctx = b.proj.backward(c.ctx.view(), dh.view(), &mut g.proj);
            let dqkv = attention_backward(&c.attn, dctx.view(), self.config.heads);
            let da1 = b.qkv.backward(c.a1.view(), dqkv.view(), &mut g.qkv);
            dx += &b.ln1.backward(&c.ln1, da1.view(), &mut g.ln1);
        }
        self.va_proj.backward_params(cache.va.view(), dx.view(), &mut grads.va_proj);
        self.hist_proj.backward_params(cache.history.view(), dx.view(), &mut grads.hist_proj);
        if let (Some(l), Some(gl), Some(sp)) = (&self.speech_proj, grads.speech_proj.as_mut(), &cache.speech) {
            l.backward_params(sp.view(), dx.view(), gl);
        }
    }

    /// Encoder output `h_t` before the transformer, for inspection.
    pub fn encode(&self, features: &Features<F>) -> Result<Array2<F>, ModelError> {
        features.check(&self.config)?;
        let mut x = self.va_proj.forward(features.va.view());
        x += &self.hist_proj.forward(features.history.view());
        if let Some(l) = &self.speech_proj {
            x += &l.forward(features.strided_speech(self.config.stride()).view());
        }
        Ok(x)
    }
}

/// Row-wise softmax.
pub fn softmax_rows<F: NdFloat>(logits: ArrayView2<F>) -> Array2<F> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}
