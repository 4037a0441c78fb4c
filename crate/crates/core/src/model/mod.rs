//! Single-block, single-head attention encoder-decoder with exact gradients.
//!
//! The model is a pure function of a flat [`ParameterVector`]; [`Layout`] names
//! the contiguous slices. Source and target share one vocabulary id space, the
//! target embedding doubles as the output projection, input embeddings are scaled
//! by `√d` and summed with fixed sinusoidal positions.

mod decode;
mod forward;
pub mod math;

use std::ops::{Deref, DerefMut, Range};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub use decode::{DecoderState, Encoded};

const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    pub label_smoothing: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 32,
            hidden_dim: 64,
            max_len: 32,
            label_smoothing: 0.1,
            init_scale: 0.08,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.vocab_size < crate::text::NUM_RESERVED + 1 {
            return bad(format!("vocab size {} too small", self.vocab_size));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(2) || self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(2) {
            return bad("embed and hidden dims must be positive and even".into());
        }
        if self.max_len < 4 {
            return bad("max_len must be at least 4".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label smoothing must lie in [0, 1)".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init scale must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Hash of everything that determines the parameter layout.
    pub fn layout_hash(&self) -> String {
        let key = format!("v{}-d{}-h{}", self.vocab_size, self.embed_dim, self.hidden_dim);
        let digest = Sha256::digest(key.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

/// Kind of a named tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub kind: TensorKind,
    pub range: Range<usize>,
}

/// Offsets of every named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        use TensorKind::*;
        let (v, d, h) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim);
        let shapes: [(&'static str, usize, usize, TensorKind); 20] = [
            ("src_embed", v, d, Embedding),
            ("tgt_embed", v, d, Embedding),
            ("enc_wq", d, d, Weight),
            ("enc_wk", d, d, Weight),
            ("enc_wv", d, d, Weight),
            ("enc_w1", d, h, Weight),
            ("enc_b1", 1, h, Bias),
            ("enc_w2", h, d, Weight),
            ("enc_b2", 1, d, Bias),
            ("dec_self_wq", d, d, Weight),
            ("dec_self_wk", d, d, Weight),
            ("dec_self_wv", d, d, Weight),
            ("dec_cross_wq", d, d, Weight),
            ("dec_cross_wk", d, d, Weight),
            ("dec_cross_wv", d, d, Weight),
            ("dec_w1", d, h, Weight),
            ("dec_b1", 1, h, Bias),
            ("dec_w2", h, d, Weight),
            ("dec_b2", 1, d, Bias),
            ("out_bias", 1, v, Bias),
        ];
        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|(name, rows, cols, kind)| {
                let range = offset..offset + rows * cols;
                offset = range.end;
                TensorSpec { name, rows, cols, kind, range }
            })
            .collect();
        Self { tensors, total: offset }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Flat vector of all model weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Splits the vector into its named tensors, in layout order.
    pub fn unflatten<'a>(&'a self, layout: &'a Layout) -> Vec<(&'static str, &'a [f64])> {
        layout
            .tensors
            .iter()
            .map(|t| (t.name, &self.0[t.range.clone()]))
            .collect()
    }

    pub fn flatten(parts: &[(&'static str, &[f64])]) -> Self {
        Self(parts.iter().flat_map(|(_, s)| s.iter().copied()).collect())
    }

    /// Bit-level equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Typed views of the named tensors.
pub(crate) struct Weights<'a> {
    pub src_embed: &'a [f64],
    pub tgt_embed: &'a [f64],
    pub enc_wq: &'a [f64],
    pub enc_wk: &'a [f64],
    pub enc_wv: &'a [f64],
    pub enc_w1: &'a [f64],
    pub enc_b1: &'a [f64],
    pub enc_w2: &'a [f64],
    pub enc_b2: &'a [f64],
    pub dec_self_wq: &'a [f64],
    pub dec_self_wk: &'a [f64],
    pub dec_self_wv: &'a [f64],
    pub dec_cross_wq: &'a [f64],
    pub dec_cross_wk: &'a [f64],
    pub dec_cross_wv: &'a [f64],
    pub dec_w1: &'a [f64],
    pub dec_b1: &'a [f64],
    pub dec_w2: &'a [f64],
    pub dec_b2: &'a [f64],
    pub out_bias: &'a [f64],
}

macro_rules! split_tensors {
    ($slice:expr, $layout:expr, $split:ident, $name:ident { $($field:ident),* $(,)? }) => {{
        let mut rest = $slice;
        let mut it = $layout.tensors.iter();
        $(
            let spec = it.next().expect("layout covers every tensor");
            debug_assert_eq!(spec.name, stringify!($field));
            let (head, tail) = rest.$split(spec.range.len());
            rest = tail;
            let $field = head;
        )*
        debug_assert!(rest.is_empty());
        $name { $($field),* }
    }};
}

macro_rules! with_all_tensors {
    ($m:ident, $($args:tt)*) => {
        $m!($($args)* {
            src_embed, tgt_embed, enc_wq, enc_wk, enc_wv, enc_w1, enc_b1, enc_w2, enc_b2,
            dec_self_wq, dec_self_wk, dec_self_wv, dec_cross_wq, dec_cross_wk, dec_cross_wv,
            dec_w1, dec_b1, dec_w2, dec_b2, out_bias
        })
    };
}

/// Mutable gradient views, same fields as [`Weights`].
pub(crate) struct Grads<'a> {
    pub src_embed: &'a mut [f64],
    pub tgt_embed: &'a mut [f64],
    pub enc_wq: &'a mut [f64],
    pub enc_wk: &'a mut [f64],
    pub enc_wv: &'a mut [f64],
    pub enc_w1: &'a mut [f64],
    pub enc_b1: &'a mut [f64],
    pub enc_w2: &'a mut [f64],
    pub enc_b2: &'a mut [f64],
    pub dec_self_wq: &'a mut [f64],
    pub dec_self_wk: &'a mut [f64],
    pub dec_self_wv: &'a mut [f64],
    pub dec_cross_wq: &'a mut [f64],
    pub dec_cross_wk: &'a mut [f64],
    pub dec_cross_wv: &'a mut [f64],
    pub dec_w1: &'a mut [f64],
    pub dec_b1: &'a mut [f64],
    pub dec_w2: &'a mut [f64],
    pub dec_b2: &'a mut [f64],
    pub out_bias: &'a mut [f64],
}

impl<'a> Weights<'a> {
    fn new(params: &'a [f64], layout: &Layout) -> Self {
        with_all_tensors!(split_tensors, params, layout, split_at, Weights)
    }
}

impl<'a> Grads<'a> {
    fn new(grad: &'a mut [f64], layout: &Layout) -> Self {
        with_all_tensors!(split_tensors, grad, layout, split_at_mut, Grads)
    }
}

/// Immutable model: configuration, layout and position table. Parameters are
/// always passed in, so one `Model` serves every checkpoint of a run.
#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    layout: Layout,
    positions: Vec<f64>,
    emb_scale: f64,
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let mut positions = vec![0.0; cfg.max_len * d];
        for pos in 0..cfg.max_len {
            for i in 0..d / 2 {
                let freq = 10000f64.powf(-((2 * i) as f64) / d as f64);
                let a = pos as f64 * freq;
                positions[pos * d + 2 * i] = a.sin();
                positions[pos * d + 2 * i + 1] = a.cos();
            }
        }
        Ok(Self {
            layout: Layout::new(&cfg),
            positions,
            emb_scale: (d as f64).sqrt(),
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Sinusoidal position encoding row.
    pub fn position(&self, pos: usize) -> &[f64] {
        let d = self.cfg.embed_dim;
        &self.positions[pos * d..(pos + 1) * d]
    }

    pub fn embedding_scale(&self) -> f64 {
        self.emb_scale
    }

    /// Weights uniform in `[-σ, σ]` from the config seed; biases zero.
    pub fn init_params(&self) -> ParameterVector {
        let mut rng = stream_rng(self.cfg.seed, INIT_STREAM, 0);
        let s = self.cfg.init_scale;
        let mut p = ParameterVector::zeros(self.layout.total);
        for t in &self.layout.tensors {
            if t.kind == TensorKind::Bias {
                continue;
            }
            for x in &mut p[t.range.clone()] {
                *x = if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
            }
        }
        p
    }

    pub(crate) fn weights<'a>(&self, params: &'a [f64]) -> Weights<'a> {
        Weights::new(params, &self.layout)
    }

    pub(crate) fn grads<'a>(&self, grad: &'a mut [f64]) -> Grads<'a> {
        Grads::new(grad, &self.layout)
    }

    fn check_len(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::LengthMismatch {
                expected: self.layout.total,
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_sentence(&self, s: &[u32]) -> Result<()> {
        if s.is_empty() {
            return Err(Error::EmptySentence);
        }
        if s.len() + 2 > self.cfg.max_len {
            return Err(Error::ExceedsMaxLen {
                len: s.len(),
                max_len: self.cfg.max_len,
            });
        }
        if let Some(&bad) = s.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(Error::UnknownId(bad));
        }
        Ok(())
    }
}
