//! Multi-teacher distillation: teachers' per-token distributions are fused
//! into soft labels once, then a student is trained on unlabeled
//! target-language sentences to match them under mean squared error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, DatasetRole};
use crate::error::{Error, Result};
use crate::model::{ProbDist, Tagger};
use crate::tagging::{tag_map_hash, NUM_TAGS};
use crate::trainer::{run_loop, LogEvent, RunLog, StepResult, TrainConfig};

/// Tolerance on `Σ ω = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Teacher {
    pub model: Tagger,
    /// What the teacher was trained on, e.g. `"D_T ∪ D_ST"`.
    pub descriptor: String,
}

#[derive(Debug, Clone)]
pub struct TeacherEnsemble {
    teachers: Vec<Teacher>,
    weights: Vec<f64>,
}

impl TeacherEnsemble {
    pub fn new(teachers: Vec<Teacher>, weights: Vec<f64>) -> Result<Self> {
        if teachers.is_empty() {
            return Err(Error::Config("ensemble needs at least one teacher".into()));
        }
        if teachers.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} teachers but {} weights",
                teachers.len(),
                weights.len()
            )));
        }
        check_weights(&weights)?;
        for t in &teachers[1..] {
            teachers[0].model.check_compatible(&t.model)?;
        }
        Ok(TeacherEnsemble { teachers, weights })
    }

    /// Equal weights, one per teacher.
    pub fn uniform(teachers: Vec<Teacher>) -> Result<Self> {
        let n = teachers.len().max(1);
        Self::new(teachers, vec![1.0 / n as f64; n])
    }

    pub fn teachers(&self) -> &[Teacher] {
        &self.teachers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.teachers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teachers.is_empty()
    }

    /// Fused distributions for one sentence.
    pub fn soft_labels(&self, tokens: &[String]) -> Result<Vec<ProbDist>> {
        let per_teacher: Vec<Vec<ProbDist>> = self
            .teachers
            .iter()
            .map(|t| t.model.probabilities(tokens))
            .collect::<Result<_>>()?;
        fuse_teachers(&per_teacher, &self.weights)
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config(format!("teacher weights must be non-negative: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Config(format!("teacher weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Convex combination `Σ_k ω_k g_k`, row by row.
pub fn fuse_teachers(per_teacher_probs: &[Vec<ProbDist>], weights: &[f64]) -> Result<Vec<ProbDist>> {
    if per_teacher_probs.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} teacher outputs but {} weights",
            per_teacher_probs.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    let n = per_teacher_probs.first().map_or(0, Vec::len);
    if let Some(bad) = per_teacher_probs.iter().position(|p| p.len() != n) {
        return Err(Error::Shape(format!(
            "teacher {bad} produced {} rows, teacher 0 produced {n}",
            per_teacher_probs[bad].len()
        )));
    }
    let mut fused = vec![[0.0; NUM_TAGS]; n];
    for (probs, &w) in per_teacher_probs.iter().zip(weights) {
        for (f, row) in fused.iter_mut().zip(probs) {
            for k in 0..NUM_TAGS {
                f[k] += w * row[k];
            }
        }
    }
    Ok(fused)
}

pub fn distill_loss(g_t: &[Vec<ProbDist>], g_s: &[Vec<ProbDist>], mask: &[Vec<bool>]) -> Result<f64> {
    distill_loss_grad(g_t, g_s, mask).map(|(v, _)| v)
}

/// `1/|D_U| Σ_sentences 1/n Σ_tokens MSE(g_t, g_s)`, where the per-token MSE
/// averages over the 13 entries. Returns the gradient w.r.t. `g_s`.
pub fn distill_loss_grad(
    g_t: &[Vec<ProbDist>],
    g_s: &[Vec<ProbDist>],
    mask: &[Vec<bool>],
) -> Result<(f64, Vec<Vec<ProbDist>>)> {
    if g_t.len() != g_s.len() || g_t.len() != mask.len() {
        return Err(Error::Shape("distill_loss: batch sizes differ".into()));
    }
    let counts: Vec<usize> = mask.iter().map(|m| m.iter().filter(|v| **v).count()).collect();
    let sentences = counts.iter().filter(|c| **c > 0).count();
    if sentences == 0 {
        return Err(Error::Empty("distill_loss: no unlabeled tokens".into()));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(g_s.len());
    for (((t_rows, s_rows), m), &count) in g_t.iter().zip(g_s).zip(mask).zip(&counts) {
        if t_rows.len() != s_rows.len() || t_rows.len() != m.len() {
            return Err(Error::Shape("distill_loss: sentence lengths differ".into()));
        }
        let mut sent_grad = vec![[0.0; NUM_TAGS]; s_rows.len()];
        if count == 0 {
            grad.push(sent_grad);
            continue;
        }
        let scale = 2.0 / (NUM_TAGS as f64 * count as f64 * sentences as f64);
        let mut sent = 0.0;
        for ((t, s), (&keep, gr)) in t_rows.iter().zip(s_rows).zip(m.iter().zip(&mut sent_grad)) {
            if !keep {
                continue;
            }
            let mut sq = 0.0;
            for k in 0..NUM_TAGS {
                let diff = s[k] - t[k];
                sq += diff * diff;
                gr[k] = scale * diff;
            }
            sent += sq / NUM_TAGS as f64;
        }
        total += sent / count as f64;
        grad.push(sent_grad);
    }
    Ok((total / sentences as f64, grad))
}

/// Fused soft labels for one unlabeled sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelRecord {
    pub id: String,
    pub probs: Vec<ProbDist>,
}

/// Sidecar written next to a soft-label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelMeta {
    pub tag_map_hash: String,
    pub records: usize,
    pub weights: Vec<f64>,
    pub teachers: Vec<String>,
}

/// Runs every teacher once over the pool. Sentences are processed in
/// parallel; the output order follows the dataset.
pub fn precompute_soft_labels(
    ensemble: &TeacherEnsemble,
    unlabeled: &Dataset,
) -> Result<Vec<SoftLabelRecord>> {
    unlabeled
        .sentences
        .par_iter()
        .map(|s| {
            Ok(SoftLabelRecord {
                id: s.id.clone(),
                probs: ensemble.soft_labels(&s.tokens)?,
            })
        })
        .collect()
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn save_soft_labels(
    records: &[SoftLabelRecord],
    ensemble: &TeacherEnsemble,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::json("serialize soft labels", e))?;
        w.write_all(b"\n").map_err(|e| Error::io("write soft labels", e))?;
    }
    w.flush().map_err(|e| Error::io("flush soft labels", e))?;
    let meta = SoftLabelMeta {
        tag_map_hash: tag_map_hash(),
        records: records.len(),
        weights: ensemble.weights().to_vec(),
        teachers: ensemble.teachers().iter().map(|t| t.descriptor.clone()).collect(),
    };
    let meta_bytes = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json("serialize meta", e))?;
    std::fs::write(meta_path(path), meta_bytes).map_err(|e| Error::io("write soft-label meta", e))
}

/// Loads a soft-label file and checks its sidecar against this build's tag map.
pub fn load_soft_labels(path: &Path) -> Result<Vec<SoftLabelRecord>> {
    let meta_file = meta_path(path);
    let meta_bytes = std::fs::read(&meta_file)
        .map_err(|e| Error::io(format!("read {}", meta_file.display()), e))?;
    let meta: SoftLabelMeta =
        serde_json::from_slice(&meta_bytes).map_err(|e| Error::json("parse soft-label meta", e))?;
    if meta.tag_map_hash != tag_map_hash() {
        return Err(Error::Incompatible("soft labels use a different tag map".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io("read soft labels", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SoftLabelRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    if out.len() != meta.records {
        return Err(Error::Dataset(format!(
            "soft-label file has {} records, sidecar says {}",
            out.len(),
            meta.records
        )));
    }
    Ok(out)
}

/// Trains the student on frozen soft labels with the MSE objective.
pub fn train_student(
    student_init: Tagger,
    unlabeled: &Dataset,
    soft_labels: &[SoftLabelRecord],
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<(Tagger, RunLog)> {
    if unlabeled.role != DatasetRole::Unlabeled {
        return Err(Error::Dataset(format!(
            "distillation expects an unlabeled pool, got role {:?}",
            unlabeled.role
        )));
    }
    if soft_labels.len() != unlabeled.len() {
        return Err(Error::Shape(format!(
            "{} soft-label records for {} sentences",
            soft_labels.len(),
            unlabeled.len()
        )));
    }
    let max_len = student_init.config().max_len;
    for (s, r) in unlabeled.iter().zip(soft_labels) {
        if s.id != r.id || r.probs.len() != s.len().min(max_len) {
            return Err(Error::IdMismatch(format!(
                "soft labels for {:?} do not match sentence {:?}",
                r.id, s.id
            )));
        }
    }
    let sentences = &unlabeled.sentences;
    run_loop(student_init, sentences.len(), dev, config, |model, idx, step| {
        let tokens: Vec<&[String]> = idx.iter().map(|&i| sentences[i].tokens.as_slice()).collect();
        let pass = model.forward(&tokens)?;
        let targets: Vec<Vec<ProbDist>> = idx.iter().map(|&i| soft_labels[i].probs.clone()).collect();
        let mask: Vec<Vec<bool>> = targets.iter().map(|t| vec![true; t.len()]).collect();
        let (kd, d_probs) = distill_loss_grad(&targets, &pass.probs, &mask)?;
        Ok(StepResult {
            event: LogEvent::Step {
                step,
                loss: kd,
                ce: None,
                cl: None,
                kd: Some(kd),
            },
            loss: kd,
            grad: model.backward(&pass, &d_probs),
        })
    })
}

/// Output of a distillation run.
#[derive(Debug, Clone)]
pub struct DistillationRun {
    pub student: Tagger,
    pub log: RunLog,
    pub soft_labels: Vec<SoftLabelRecord>,
}

/// Precomputes fused soft labels once, then trains the student on them.
pub fn run_distillation(
    ensemble: &TeacherEnsemble,
    unlabeled: &Dataset,
    student_init: Tagger,
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<DistillationRun> {
    if unlabeled.role != DatasetRole::Unlabeled {
        return Err(Error::Dataset("distillation needs an unlabeled pool".into()));
    }
    if unlabeled.is_empty() {
        return Err(Error::Empty("unlabeled pool".into()));
    }
    ensemble.teachers()[0].model.check_compatible(&student_init)?;
    let soft_labels = precompute_soft_labels(ensemble, unlabeled)?;
    info!(
        "soft labels for {} sentences from {} teachers",
        soft_labels.len(),
        ensemble.len()
    );
    let (student, log) = train_student(student_init, unlabeled, &soft_labels, dev, config)?;
    Ok(DistillationRun {
        student,
        log,
        soft_labels,
    })
}
