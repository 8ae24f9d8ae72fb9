//! Supervised training with cross-entropy plus optional contrastive loss,
//! dev-set model selection over the final steps of a run, batch-size grid
//! search, and multilingual dataset mixing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::evaluate;
use crate::corpus::{merge, AnnotatedSentence, Dataset};
use crate::error::{Error, Result};
use crate::model::{ProbDist, Tagger};
use crate::objectives::{
    combined_loss, contrastive_loss_grad, cross_entropy_grad, select_pool, ContrastiveBatch,
    ContrastiveConfig, ContrastiveLevel,
};
use crate::tagging::{LabelTag, NUM_TAGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossLevel {
    Token,
    Sentiment,
    None,
}

impl LossLevel {
    pub fn contrastive(self) -> Option<ContrastiveLevel> {
        match self {
            LossLevel::Token => Some(ContrastiveLevel::Token),
            LossLevel::Sentiment => Some(ContrastiveLevel::Sentiment),
            LossLevel::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_interval: usize,
    pub selection_window: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub level: LossLevel,
    pub include_o: bool,
    pub max_o_per_batch: Option<usize>,
    pub seed: u64,
    pub languages: Vec<String>,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            batch_size: 32,
            max_steps: 2000,
            eval_interval: 100,
            selection_window: 500,
            temperature: 0.07,
            alpha: 0.5,
            level: LossLevel::None,
            include_o: true,
            max_o_per_batch: None,
            seed: 0,
            languages: Vec::new(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for continuing a student model on soft labels.
    pub fn student() -> Self {
        TrainConfig {
            max_steps: 1000,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_steps == 0 || self.eval_interval == 0 {
            return Err(Error::Config("max_steps and eval_interval must be positive".into()));
        }
        if self.selection_window == 0 || self.selection_window > self.max_steps {
            return Err(Error::Config(format!(
                "selection_window {} must lie in 1..={}",
                self.selection_window, self.max_steps
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if let Some(c) = self.contrastive() {
            c.validate()?;
        }
        Ok(())
    }

    pub fn contrastive(&self) -> Option<ContrastiveConfig> {
        self.level.contrastive().map(|level| ContrastiveConfig {
            level,
            temperature: self.temperature,
            alpha: self.alpha,
            include_o: self.include_o,
            max_o_per_batch: self.max_o_per_batch,
        })
    }

    /// First step whose evaluation can be selected.
    pub fn window_start(&self) -> usize {
        self.max_steps - self.selection_window + 1
    }

    fn is_eval_step(&self, step: usize) -> bool {
        step >= self.window_start() && (step % self.eval_interval == 0 || step == self.max_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Step {
        step: usize,
        loss: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        ce: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        cl: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        kd: Option<f64>,
    },
    Eval {
        step: usize,
        dev_f1: f64,
    },
    Selected {
        step: usize,
        dev_f1: f64,
    },
}

/// Append-only record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub events: Vec<LogEvent>,
}

impl RunLog {
    pub fn push(&mut self, event: LogEvent) {
        self.events.push(event);
    }

    pub fn losses(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Step { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn evals(&self) -> Vec<(usize, f64)> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Eval { step, dev_f1 } => Some((*step, *dev_f1)),
                _ => None,
            })
            .collect()
    }

    pub fn selected(&self) -> Option<(usize, f64)> {
        self.events.iter().rev().find_map(|e| match e {
            LogEvent::Selected { step, dev_f1 } => Some((*step, *dev_f1)),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            serde_json::to_writer(&mut out, e).expect("event serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_jsonl())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("write {}", path.display()), e))
    }
}

pub(crate) struct Adam {
    config: OptimizerConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(config: OptimizerConfig, lr: f64, n: usize) -> Self {
        Adam {
            config,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, model: &mut Tagger, grad: &[f64]) {
        self.t += 1;
        match self.config {
            OptimizerConfig::Sgd => {
                for (p, g) in model.params_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t);
                let bc2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in model
                    .params_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Epoch-wise shuffled batches without replacement.
pub(crate) struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl BatchSampler {
    pub(crate) fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut s = BatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
            batch_size,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    pub(crate) fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}

/// Loss values and parameter gradient for one step.
pub(crate) struct StepResult {
    pub event: LogEvent,
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Shared optimisation loop: sample, compute step loss, update, and pick the
/// best dev evaluation inside the selection window.
pub(crate) fn run_loop<F>(
    mut model: Tagger,
    n_items: usize,
    dev: &Dataset,
    config: &TrainConfig,
    mut step_fn: F,
) -> Result<(Tagger, RunLog)>
where
    F: FnMut(&Tagger, &[usize], usize) -> Result<StepResult>,
{
    config.validate()?;
    if n_items == 0 {
        return Err(Error::Empty("training data".into()));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev set".into()));
    }
    if !dev.is_labeled() {
        return Err(Error::Dataset("dev set must be labeled".into()));
    }
    let mut log = RunLog::default();
    let mut sampler = BatchSampler::new(n_items, config.batch_size, config.seed);
    let mut optimizer = Adam::new(config.optimizer, config.learning_rate, model.num_params());
    let mut best: Option<(usize, f64, Tagger)> = None;
    for step in 1..=config.max_steps {
        let batch = sampler.next_batch();
        let result = step_fn(&model, &batch, step)?;
        if !result.loss.is_finite() || result.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                loss: result.loss,
            });
        }
        log.push(result.event);
        optimizer.step(&mut model, &result.grad);
        if config.is_eval_step(step) {
            let f1 = evaluate(&model, dev)?.micro_f1;
            debug!("step {step}: dev micro-F1 {f1:.4}");
            log.push(LogEvent::Eval { step, dev_f1: f1 });
            if best.as_ref().is_none_or(|(_, b, _)| f1 > *b) {
                best = Some((step, f1, model.clone()));
            }
        }
    }
    let (step, dev_f1, chosen) = best.expect("the final step is always evaluated");
    info!("selected step {step} with dev micro-F1 {dev_f1:.4}");
    log.push(LogEvent::Selected { step, dev_f1 });
    Ok((chosen, log))
}

fn gold_indices(sentence: &AnnotatedSentence, max_len: usize) -> Result<Vec<usize>> {
    let tags = sentence
        .tags
        .as_ref()
        .ok_or_else(|| Error::Dataset(format!("sentence {:?} is unlabeled", sentence.id)))?;
    Ok(tags.iter().take(max_len).map(|t| t.index()).collect())
}

/// Combined supervised loss and gradient for one batch of labeled sentences.
pub fn supervised_step(
    model: &Tagger,
    batch: &[&AnnotatedSentence],
    config: &TrainConfig,
) -> Result<(LogEvent, f64, Vec<f64>)> {
    let tokens: Vec<&[String]> = batch.iter().map(|s| s.tokens.as_slice()).collect();
    let pass = model.forward(&tokens)?;
    let gold: Vec<Vec<usize>> = batch
        .iter()
        .map(|s| gold_indices(s, model.config().max_len))
        .collect::<Result<_>>()?;
    let mask: Vec<Vec<bool>> = gold.iter().map(|g| vec![true; g.len()]).collect();
    let (ce, ce_grad) = cross_entropy_grad(&pass.probs, &gold, &mask)?;

    let contrastive = config.contrastive().filter(|c| c.alpha > 0.0);
    let Some(cconf) = contrastive else {
        let grad = model.backward(&pass, &ce_grad);
        return Ok((
            LogEvent::Step {
                step: 0,
                loss: ce,
                ce: Some(ce),
                cl: None,
                kd: None,
            },
            ce,
            grad,
        ));
    };

    // Pool every valid token of every sentence in the batch.
    let mut positions = Vec::new();
    let mut tags: Vec<LabelTag> = Vec::new();
    for (b, g) in gold.iter().enumerate() {
        for (t, &idx) in g.iter().enumerate() {
            positions.push((b, t));
            tags.push(LabelTag::from_index(idx).expect("valid gold index"));
        }
    }
    let keep = select_pool(&tags, &cconf);
    let pool_probs: Vec<ProbDist> = keep
        .iter()
        .map(|&i| pass.probs[positions[i].0][positions[i].1])
        .collect();
    let pool_tags: Vec<LabelTag> = keep.iter().map(|&i| tags[i]).collect();
    let cbatch = ContrastiveBatch::from_tags(pool_probs, &pool_tags, cconf.level)?;
    let (cl, cl_grad) = contrastive_loss_grad(&cbatch, &cconf)?;

    let alpha = cconf.alpha;
    let mut d_probs: Vec<Vec<ProbDist>> = ce_grad
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|r| std::array::from_fn(|k| (1.0 - alpha) * r[k]))
                .collect()
        })
        .collect();
    for (&i, g) in keep.iter().zip(&cl_grad) {
        let (b, t) = positions[i];
        for k in 0..NUM_TAGS {
            d_probs[b][t][k] += alpha * g[k];
        }
    }
    let loss = combined_loss(ce, cl, alpha);
    let grad = model.backward(&pass, &d_probs);
    Ok((
        LogEvent::Step {
            step: 0,
            loss,
            ce: Some(ce),
            cl: Some(cl),
            kd: None,
        },
        loss,
        grad,
    ))
}

fn with_step(event: LogEvent, step: usize) -> LogEvent {
    match event {
        LogEvent::Step {
            loss, ce, cl, kd, ..
        } => LogEvent::Step {
            step,
            loss,
            ce,
            cl,
            kd,
        },
        other => other,
    }
}

/// Trains `model` on labeled data and returns the checkpoint with the best
/// dev micro-F1 among the evaluations in the final `selection_window` steps.
pub fn train(
    model: Tagger,
    train_data: &Dataset,
    dev_data: &Dataset,
    config: &TrainConfig,
) -> Result<(Tagger, RunLog)> {
    if !train_data.is_labeled() {
        return Err(Error::Dataset("training data must be labeled".into()));
    }
    let sentences = &train_data.sentences;
    run_loop(model, sentences.len(), dev_data, config, |m, idx, step| {
        let batch: Vec<&AnnotatedSentence> = idx.iter().map(|&i| &sentences[i]).collect();
        let (event, loss, grad) = supervised_step(m, &batch, config)?;
        Ok(StepResult {
            event: with_step(event, step),
            loss,
            grad,
        })
    })
}

/// Merges every dataset of every language into one shuffled stream and
/// trains on it.
pub fn train_multilingual(
    model: Tagger,
    per_language_data: &BTreeMap<String, Vec<Dataset>>,
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<(Tagger, RunLog)> {
    let all: Vec<&Dataset> = per_language_data.values().flatten().collect();
    let merged = merge(&all, config.seed)?;
    info!(
        "multilingual stream: {} sentences from {} languages",
        merged.len(),
        per_language_data.len()
    );
    train(model, &merged, dev, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub batch_size: usize,
    pub dev_f1: f64,
    pub best: bool,
}

/// One training run per batch size; rows sorted by batch size with the best
/// dev F1 flagged (first one on ties).
pub fn grid_search<F>(
    model_factory: F,
    data: &Dataset,
    dev: &Dataset,
    base_config: &TrainConfig,
    batch_sizes: &[usize],
) -> Result<Vec<GridRow>>
where
    F: Fn(&TrainConfig) -> Tagger,
{
    if batch_sizes.is_empty() {
        return Err(Error::Config("grid search needs at least one batch size".into()));
    }
    let mut sizes = batch_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::with_capacity(sizes.len());
    for bs in sizes {
        let config = TrainConfig {
            batch_size: bs,
            ..base_config.clone()
        };
        let (_, log) = train(model_factory(&config), data, dev, &config)?;
        let dev_f1 = log.selected().map(|(_, f)| f).unwrap_or(0.0);
        rows.push(GridRow {
            batch_size: bs,
            dev_f1,
            best: false,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.dev_f1 > rows[b].dev_f1 { i } else { b });
    rows[best].best = true;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, Vocab};
    use crate::synthetic::{SyntheticConfig, SyntheticCorpus};

    fn tiny() -> (SyntheticCorpus, Tagger) {
        let corpus = SyntheticCorpus::generate(&SyntheticConfig {
            train_size: 40,
            dev_size: 10,
            test_size: 10,
            unlabeled_size: 10,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
        let model = Tagger::new(
            EncoderConfig {
                hidden_dim: 8,
                ..EncoderConfig::default()
            },
            vocab,
        );
        (corpus, model)
    }

    fn quick(level: LossLevel) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            max_steps: 12,
            eval_interval: 4,
            selection_window: 8,
            level,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_runs() {
        let (c, m) = tiny();
        let cfg = quick(LossLevel::Token);
        let (a, la) = train(m.clone(), &c.source, &c.source_dev, &cfg).unwrap();
        let (b, lb) = train(m, &c.source, &c.source_dev, &cfg).unwrap();
        assert_eq!(la.to_jsonl(), lb.to_jsonl());
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
    }

    #[test]
    fn zero_alpha_matches_plain_cross_entropy() {
        let (c, m) = tiny();
        let plain = quick(LossLevel::None);
        let inert = TrainConfig {
            alpha: 0.0,
            ..quick(LossLevel::Sentiment)
        };
        let (_, a) = train(m.clone(), &c.source, &c.source_dev, &plain).unwrap();
        let (_, b) = train(m, &c.source, &c.source_dev, &inert).unwrap();
        assert_eq!(a.losses(), b.losses());
    }

    #[test]
    fn selection_stays_in_window_and_is_best() {
        let (c, m) = tiny();
        let cfg = quick(LossLevel::Sentiment);
        let (_, log) = train(m, &c.source, &c.source_dev, &cfg).unwrap();
        let evals = log.evals();
        assert_eq!(evals.iter().map(|e| e.0).collect::<Vec<_>>(), vec![8, 12]);
        let (step, f1) = log.selected().unwrap();
        assert!(step >= cfg.window_start());
        assert!(evals.iter().all(|(_, f)| f1 >= *f));
    }

    #[test]
    fn config_errors() {
        let (c, m) = tiny();
        let mut cfg = quick(LossLevel::Token);
        cfg.selection_window = 100;
        assert!(matches!(train(m.clone(), &c.source, &c.source_dev, &cfg), Err(Error::Config(_))));
        let empty = Dataset::new(vec![], crate::corpus::DatasetRole::Evaluation).unwrap();
        assert!(matches!(
            train(m.clone(), &c.source, &empty, &quick(LossLevel::None)),
            Err(Error::Empty(_))
        ));
        let mut bad = quick(LossLevel::Token);
        bad.temperature = 0.0;
        assert!(train(m, &c.source, &c.source_dev, &bad).is_err());
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let (c, mut m) = tiny();
        // A non-finite weight poisons the first forward pass.
        m.head_mut().weight_mut()[0] = f64::INFINITY;
        let cfg = quick(LossLevel::Token);
        match train(m, &c.source, &c.source_dev, &cfg) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            Err(Error::NonFinite(_)) => {}
            other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn grid_and_multilingual() {
        let (c, m) = tiny();
        let rows = grid_search(|_| m.clone(), &c.source, &c.source_dev, &quick(LossLevel::Token), &[16, 4]).unwrap();
        assert_eq!(rows.iter().map(|r| r.batch_size).collect::<Vec<_>>(), vec![4, 16]);
        assert_eq!(rows.iter().filter(|r| r.best).count(), 1);

        let single = grid_search(|_| m.clone(), &c.source, &c.source_dev, &quick(LossLevel::None), &[16]).unwrap();
        assert_eq!(single.len(), 1);

        let mut per_lang = BTreeMap::new();
        per_lang.insert("en".to_string(), vec![c.source.clone()]);
        let cfg = quick(LossLevel::None);
        let (_, a) = train_multilingual(m.clone(), &per_lang, &c.source_dev, &cfg).unwrap();
        let (_, b) = train_multilingual(m, &per_lang, &c.source_dev, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(10, 4, 1);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| s.next_batch()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
