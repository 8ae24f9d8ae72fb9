//! Token encoder plus softmax classification head.

mod encoder;
mod head;
pub mod subword;
mod vocab;

use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use encoder::{ContextEncoder, EncoderConfig, SentenceTrace};
pub use head::{softmax, softmax_backward, ClassificationHead};
pub use vocab::{Vocab, UNK, UNK_ID};

use crate::error::{Error, Result};
use crate::tagging::{hash_tag_names, tag_map_hash, tag_names, LabelTag, NUM_TAGS};

/// A probability distribution over the 13 tags.
pub type ProbDist = [f64; NUM_TAGS];

/// Hidden states of shape `[batch, max_len, dim]`; padded positions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    dim: usize,
    max_len: usize,
    lengths: Vec<usize>,
    data: Vec<f64>,
}

impl Hidden {
    /// Builds from per-sentence row-major `len × dim` blocks.
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        let lengths: Vec<usize> = rows.iter().map(|r| r.len() / dim).collect();
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        let mut data = vec![0.0; rows.len() * max_len * dim];
        for (b, row) in rows.iter().enumerate() {
            let off = b * max_len * dim;
            data[off..off + row.len()].copy_from_slice(row);
        }
        Hidden {
            dim,
            max_len,
            lengths,
            data,
        }
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn token(&self, b: usize, t: usize) -> &[f64] {
        let off = (b * self.max_len + t) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn token_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let off = (b * self.max_len + t) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    /// `mask[b][t]` is true for real (non-padding) positions.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.lengths
            .iter()
            .map(|&n| (0..self.max_len).map(|t| t < n).collect())
            .collect()
    }
}

/// Contract every token encoder satisfies: token sequences in, one hidden
/// vector per token out. Sentences are encoded independently.
pub trait Encoder {
    fn hidden_dim(&self) -> usize;
    fn max_len(&self) -> usize;
    fn vocab(&self) -> &Vocab;
    fn encode(&self, sentences: &[Vec<String>]) -> Result<Hidden>;
}

pub(crate) fn truncate(tokens: &[String], max_len: usize) -> &[String] {
    if tokens.len() > max_len {
        warn!(
            "sentence of {} tokens truncated to {max_len}",
            tokens.len()
        );
        &tokens[..max_len]
    } else {
        tokens
    }
}

/// Argmax per valid position; ties go to the lowest tag index.
pub fn predict_tags(probs: &[Vec<ProbDist>], mask: &[Vec<bool>]) -> Vec<Vec<LabelTag>> {
    probs
        .iter()
        .zip(mask)
        .map(|(rows, m)| {
            rows.iter()
                .zip(m)
                .filter(|(_, keep)| **keep)
                .map(|(row, _)| LabelTag::from_index(argmax(row)).expect("index < 13"))
                .collect()
        })
        .collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Encoder and head together: the full token classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    encoder: ContextEncoder,
    head: ClassificationHead,
}

/// Forward activations for a batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub traces: Vec<SentenceTrace>,
    pub logits: Vec<Vec<ProbDist>>,
    pub probs: Vec<Vec<ProbDist>>,
}

impl Tagger {
    pub fn new(config: EncoderConfig, vocab: Vocab) -> Self {
        let head = ClassificationHead::zeros(config.hidden_dim);
        Tagger {
            encoder: ContextEncoder::new(config, vocab),
            head,
        }
    }

    pub fn from_parts(encoder: ContextEncoder, head: ClassificationHead) -> Result<Self> {
        if encoder.config().hidden_dim != head.dim() {
            return Err(Error::Shape(format!(
                "encoder hidden_dim {} vs head input {}",
                encoder.config().hidden_dim,
                head.dim()
            )));
        }
        Ok(Tagger { encoder, head })
    }

    pub fn encoder(&self) -> &ContextEncoder {
        &self.encoder
    }

    pub fn head(&self) -> &ClassificationHead {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut ClassificationHead {
        &mut self.head
    }

    pub fn vocab(&self) -> &Vocab {
        self.encoder.vocab()
    }

    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.params().len() + self.head.weight().len() + self.head.bias().len()
    }

    /// All parameters in gradient order: encoder, head weight, head bias.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (w, b) = self.head.params_mut();
        self.encoder
            .params_mut()
            .iter_mut()
            .chain(w.iter_mut())
            .chain(b.iter_mut())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.encoder
            .params()
            .iter()
            .chain(self.head.weight())
            .chain(self.head.bias())
    }

    pub fn forward(&self, sentences: &[&[String]]) -> Result<ForwardPass> {
        let mut traces = Vec::with_capacity(sentences.len());
        let mut logits = Vec::with_capacity(sentences.len());
        let mut probs = Vec::with_capacity(sentences.len());
        let d = self.config().hidden_dim;
        for tokens in sentences {
            let ids = self.vocab().ids(truncate(tokens, self.config().max_len));
            let trace = self.encoder.forward_ids(&ids);
            let z: Vec<ProbDist> = trace
                .output()
                .chunks_exact(d)
                .map(|h| self.head.logits(h))
                .collect::<Result<_>>()?;
            probs.push(z.iter().map(softmax).collect());
            logits.push(z);
            traces.push(trace);
        }
        Ok(ForwardPass {
            traces,
            logits,
            probs,
        })
    }

    /// Gradient of the loss w.r.t. all parameters, given the gradient w.r.t.
    /// the output probabilities of `pass`.
    pub fn backward(&self, pass: &ForwardPass, d_probs: &[Vec<ProbDist>]) -> Vec<f64> {
        let enc_len = self.encoder.params().len();
        let w_len = self.head.weight().len();
        let mut grad = vec![0.0; self.num_params()];
        let d = self.config().hidden_dim;
        for ((trace, probs), dps) in pass.traces.iter().zip(&pass.probs).zip(d_probs) {
            let mut d_hidden = vec![0.0; trace.len() * d];
            let (g_enc, g_head) = grad.split_at_mut(enc_len);
            let (g_w, g_b) = g_head.split_at_mut(w_len);
            for (t, (p, dp)) in probs.iter().zip(dps).enumerate() {
                let dz = softmax_backward(p, dp);
                let h = &trace.output()[t * d..(t + 1) * d];
                self.head
                    .backward(h, &dz, g_w, g_b, &mut d_hidden[t * d..(t + 1) * d]);
            }
            self.encoder.backward(trace, &d_hidden, g_enc);
        }
        grad
    }

    /// Per-token tag distributions for one sentence.
    pub fn probabilities(&self, tokens: &[String]) -> Result<Vec<ProbDist>> {
        Ok(self.forward(&[tokens])?.probs.remove(0))
    }

    pub fn predict(&self, tokens: &[String]) -> Result<Vec<LabelTag>> {
        let probs = self.probabilities(tokens)?;
        let mask = vec![vec![true; probs.len()]];
        Ok(predict_tags(&[probs], &mask).remove(0))
    }

    /// Final-layer hidden states, row-major `n × hidden_dim`.
    pub fn hidden_states(&self, tokens: &[String]) -> Vec<f64> {
        let ids = self.vocab().ids(truncate(tokens, self.config().max_len));
        self.encoder.forward_ids(&ids).output().to_vec()
    }

    pub fn config_hash(&self) -> String {
        config_hash(self.config(), self.vocab())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            encoder_config: self.config().clone(),
            config_hash: self.config_hash(),
            tag_names: tag_names(),
            tag_map_hash: tag_map_hash(),
            vocab: self.vocab().clone(),
            encoder_params: self.encoder.params().to_vec(),
            head_weight: self.head.weight().to_vec(),
            head_bias: self.head.bias().to_vec(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.verify()?;
        let dim = ckpt.encoder_config.hidden_dim;
        let encoder = ContextEncoder::from_params(ckpt.encoder_config, ckpt.vocab, ckpt.encoder_params)?;
        let head = ClassificationHead::from_params(dim, ckpt.head_weight, ckpt.head_bias)?;
        Tagger::from_parts(encoder, head)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Tagger::from_checkpoint(Checkpoint::load(path)?)
    }

    /// Fails unless both models share tag map, vocabulary, and encoder shape.
    pub fn check_compatible(&self, other: &Tagger) -> Result<()> {
        if self.vocab() != other.vocab() {
            return Err(Error::Incompatible("vocabularies differ".into()));
        }
        let (a, b) = (self.config(), other.config());
        if (a.hidden_dim, a.layers, a.window) != (b.hidden_dim, b.layers, b.window) {
            return Err(Error::Incompatible("encoder shapes differ".into()));
        }
        Ok(())
    }
}

impl Encoder for Tagger {
    fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim()
    }

    fn max_len(&self) -> usize {
        self.encoder.max_len()
    }

    fn vocab(&self) -> &Vocab {
        self.encoder.vocab()
    }

    fn encode(&self, sentences: &[Vec<String>]) -> Result<Hidden> {
        self.encoder.encode(sentences)
    }
}

pub const CHECKPOINT_FORMAT: &str = "clxabsa-checkpoint/1";

pub fn config_hash(config: &EncoderConfig, vocab: &Vocab) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    hasher.update(serde_json::to_vec(vocab).expect("vocab serializes"));
    hex::encode(hasher.finalize())
}

/// On-disk model container (JSON). Floats are written with shortest
/// round-trip formatting, so save → load → save is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub encoder_config: EncoderConfig,
    pub config_hash: String,
    pub tag_names: Vec<String>,
    pub tag_map_hash: String,
    pub vocab: Vocab,
    pub encoder_params: Vec<f64>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Checkpoint {
    pub fn verify(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Incompatible(format!(
                "unknown checkpoint format {:?}",
                self.format
            )));
        }
        if self.tag_names != tag_names() || self.tag_map_hash != hash_tag_names(&self.tag_names) {
            return Err(Error::Incompatible(
                "checkpoint tag-index map differs from this build".into(),
            ));
        }
        if self.config_hash != config_hash(&self.encoder_config, &self.vocab) {
            return Err(Error::Incompatible("checkpoint config hash mismatch".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::json(format!("parse checkpoint {}", path.display()), e))
    }
}
