//! Desk-scale token encoder: an embedding table followed by stacked
//! bidirectional window layers. With window radius `r`, layer `l` computes
//! for every position `t`
//!
//! ```text
//! y_t = tanh(b + Σ_{o=-r..=r} W_o x_{t+o})
//! ```
//!
//! with zero vectors outside the sentence, so each token sees `layers · r`
//! neighbours on both sides and nothing from other sentences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use super::{Encoder, Hidden};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub layers: usize,
    pub window: usize,
    pub max_len: usize,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden_dim: 32,
            layers: 2,
            window: 2,
            max_len: 128,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder {
    config: EncoderConfig,
    vocab: Vocab,
    /// Embeddings, then per layer: `2r+1` offset matrices W_{-r}..W_r
    /// (each d×d, row-major) and a bias.
    params: Vec<f64>,
}

/// Activations kept from a forward pass over one sentence.
#[derive(Debug, Clone)]
pub struct SentenceTrace {
    ids: Vec<usize>,
    /// `layers + 1` activations of shape n×d; index 0 is the embedding lookup.
    acts: Vec<Vec<f64>>,
}

impl SentenceTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the embedding layer")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl ContextEncoder {
    pub fn new(config: EncoderConfig, vocab: Vocab) -> Self {
        let d = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let n = Self::param_count(&config, vocab.len());
        let mut params = Vec::with_capacity(n);
        let emb = Normal::new(0.0, 0.5).expect("valid normal");
        for _ in 0..vocab.len() * d {
            params.push(emb.sample(&mut rng));
        }
        let taps = 2 * config.window + 1;
        let limit = (6.0 / ((taps + 1) * d) as f64).sqrt();
        let weight = Uniform::new_inclusive(-limit, limit).expect("valid range");
        for _ in 0..config.layers {
            for _ in 0..taps * d * d {
                params.push(rng.sample(weight));
            }
            params.extend(std::iter::repeat_n(0.0, d));
        }
        debug_assert_eq!(params.len(), n);
        ContextEncoder {
            config,
            vocab,
            params,
        }
    }

    pub fn from_params(config: EncoderConfig, vocab: Vocab, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(&config, vocab.len());
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "encoder expects {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(ContextEncoder {
            config,
            vocab,
            params,
        })
    }

    fn param_count(config: &EncoderConfig, vocab_len: usize) -> usize {
        let d = config.hidden_dim;
        vocab_len * d + config.layers * ((2 * config.window + 1) * d * d + d)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        let d = self.config.hidden_dim;
        self.vocab.len() * d + layer * (self.taps() * d * d + d)
    }

    fn taps(&self) -> usize {
        2 * self.config.window + 1
    }

    /// Forward pass over one sentence of token ids.
    pub fn forward_ids(&self, ids: &[usize]) -> SentenceTrace {
        let d = self.config.hidden_dim;
        let n = ids.len();
        let mut x = vec![0.0; n * d];
        for (t, &id) in ids.iter().enumerate() {
            x[t * d..(t + 1) * d].copy_from_slice(&self.params[id * d..(id + 1) * d]);
        }
        let mut acts = vec![x];
        let r = self.config.window as isize;
        for layer in 0..self.config.layers {
            let off = self.layer_offset(layer);
            let weights = &self.params[off..off + self.taps() * d * d];
            let bias = &self.params[off + self.taps() * d * d..off + self.taps() * d * d + d];
            let input = acts.last().expect("non-empty");
            let mut out = vec![0.0; n * d];
            for t in 0..n {
                let row = &mut out[t * d..(t + 1) * d];
                row.copy_from_slice(bias);
                for o in -r..=r {
                    let src = t as isize + o;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    let src = src as usize;
                    let w = &weights[(o + r) as usize * d * d..(o + r + 1) as usize * d * d];
                    matvec_add(w, &input[src * d..(src + 1) * d], row);
                }
                for v in row.iter_mut() {
                    *v = v.tanh();
                }
            }
            acts.push(out);
        }
        SentenceTrace {
            ids: ids.to_vec(),
            acts,
        }
    }

    /// Accumulates parameter gradients into `grad` (same layout as the
    /// parameters) given the gradient of the loss w.r.t. the output states.
    pub fn backward(&self, trace: &SentenceTrace, d_out: &[f64], grad: &mut [f64]) {
        let d = self.config.hidden_dim;
        let n = trace.ids.len();
        debug_assert_eq!(d_out.len(), n * d);
        debug_assert_eq!(grad.len(), self.params.len());
        let mut d_y = d_out.to_vec();
        let r = self.config.window as isize;
        let taps = self.taps();
        for layer in (0..self.config.layers).rev() {
            let off = self.layer_offset(layer);
            let y = &trace.acts[layer + 1];
            let x = &trace.acts[layer];
            let d_pre: Vec<f64> = d_y.iter().zip(y).map(|(g, v)| g * (1.0 - v * v)).collect();
            let weights = &self.params[off..off + taps * d * d];
            let (g_w, g_rest) = grad[off..].split_at_mut(taps * d * d);
            let g_b = &mut g_rest[..d];
            let mut d_x = vec![0.0; n * d];
            for t in 0..n {
                let dp = &d_pre[t * d..(t + 1) * d];
                for (gb, v) in g_b.iter_mut().zip(dp) {
                    *gb += v;
                }
                for o in -r..=r {
                    let src = t as isize + o;
                    if src < 0 || src >= n as isize {
                        continue;
                    }
                    let src = src as usize;
                    let k = (o + r) as usize;
                    outer_add(&mut g_w[k * d * d..(k + 1) * d * d], dp, &x[src * d..(src + 1) * d]);
                    matvec_t_add(&weights[k * d * d..(k + 1) * d * d], dp, &mut d_x[src * d..(src + 1) * d]);
                }
            }
            d_y = d_x;
        }
        for (t, &id) in trace.ids.iter().enumerate() {
            for k in 0..d {
                grad[id * d + k] += d_y[t * d + k];
            }
        }
    }
}

/// out += M v, with M stored row-major as d_out × d_in.
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += Mᵀ v.
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &vi) in m.chunks_exact(cols).zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
}

/// G += a bᵀ.
fn outer_add(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (row, &ai) in g.chunks_exact_mut(cols).zip(a) {
        for (gv, bv) in row.iter_mut().zip(b) {
            *gv += ai * bv;
        }
    }
}

impl Encoder for ContextEncoder {
    fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn encode(&self, sentences: &[Vec<String>]) -> Result<Hidden> {
        let ids: Vec<Vec<usize>> = sentences
            .iter()
            .map(|s| self.vocab.ids(super::truncate(s, self.config.max_len)))
            .collect();
        let traces: Vec<SentenceTrace> = ids.iter().map(|ids| self.forward_ids(ids)).collect();
        Ok(Hidden::from_rows(
            self.config.hidden_dim,
            traces.iter().map(|t| t.output().to_vec()).collect(),
        ))
    }
}
