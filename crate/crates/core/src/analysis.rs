//! Span-level micro-F1 and semantic-space diagnostics: mean-pooled sentence
//! representations, the Calinski-Harabasz index over language clusters, and
//! a 2D PCA projection for plotting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, Dataset};
use crate::error::{Error, Result};
use crate::model::{predict_tags, Tagger};
use crate::tagging::{decode_tags, SpanAnnotation};

/// Spans of one sentence, keyed by sentence id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceSpans {
    pub id: String,
    pub language: String,
    pub spans: Vec<SpanAnnotation>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl SpanCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add(&mut self, other: SpanCounts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageScore {
    #[serde(flatten)]
    pub counts: SpanCounts,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    pub per_language: BTreeMap<String, LanguageScore>,
}

/// A predicted span counts only when start, end and sentiment all match a
/// gold span of the same sentence.
pub fn micro_f1(predicted: &[SentenceSpans], gold: &[SentenceSpans]) -> Result<EvalReport> {
    let mut pred_by_id: HashMap<&str, &SentenceSpans> = HashMap::new();
    for p in predicted {
        if pred_by_id.insert(&p.id, p).is_some() {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut total = SpanCounts::default();
    let mut per_lang: BTreeMap<String, SpanCounts> = BTreeMap::new();
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(Error::DuplicateId(g.id.clone()));
        }
        let p = pred_by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no prediction for sentence {:?}", g.id)))?;
        let gold_set: HashSet<&SpanAnnotation> = g.spans.iter().collect();
        let pred_set: HashSet<&SpanAnnotation> = p.spans.iter().collect();
        let tp = pred_set.intersection(&gold_set).count();
        let counts = SpanCounts {
            true_positives: tp,
            false_positives: pred_set.len() - tp,
            false_negatives: gold_set.len() - tp,
        };
        total.add(counts);
        per_lang.entry(g.language.clone()).or_default().add(counts);
    }
    if let Some(extra) = predicted.iter().find(|p| !seen.contains(p.id.as_str())) {
        return Err(Error::IdMismatch(format!(
            "prediction for unknown sentence {:?}",
            extra.id
        )));
    }
    Ok(EvalReport {
        true_positives: total.true_positives,
        false_positives: total.false_positives,
        false_negatives: total.false_negatives,
        precision: total.precision(),
        recall: total.recall(),
        micro_f1: total.f1(),
        per_language: per_lang
            .into_iter()
            .map(|(lang, counts)| {
                (
                    lang,
                    LanguageScore {
                        micro_f1: counts.f1(),
                        counts,
                    },
                )
            })
            .collect(),
    })
}

pub fn gold_spans(sentence: &AnnotatedSentence) -> SentenceSpans {
    SentenceSpans {
        id: sentence.id.clone(),
        language: sentence.language.clone(),
        spans: sentence.spans(),
    }
}

pub fn predict_spans(model: &Tagger, sentence: &AnnotatedSentence) -> Result<SentenceSpans> {
    let probs = model.probabilities(&sentence.tokens)?;
    let mask = vec![vec![true; probs.len()]];
    let tags = predict_tags(&[probs], &mask).remove(0);
    Ok(SentenceSpans {
        id: sentence.id.clone(),
        language: sentence.language.clone(),
        spans: decode_tags(&tags),
    })
}

/// Tags every sentence of a labeled dataset and scores the result.
pub fn evaluate(model: &Tagger, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    if !data.is_labeled() {
        return Err(Error::Dataset("evaluation set must be labeled".into()));
    }
    let predicted: Vec<SentenceSpans> = data
        .iter()
        .map(|s| predict_spans(model, s))
        .collect::<Result<_>>()?;
    let gold: Vec<SentenceSpans> = data.iter().map(gold_spans).collect();
    micro_f1(&predicted, &gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSample {
    pub id: String,
    pub language: String,
    pub representation: Vec<f64>,
}

/// Mean of final-layer hidden states over the sentence's tokens.
pub fn sentence_representation(model: &Tagger, sentence: &AnnotatedSentence) -> Result<SpaceSample> {
    if sentence.is_empty() {
        return Err(Error::Empty(format!("sentence {:?} has no tokens", sentence.id)));
    }
    let d = model.config().hidden_dim;
    let states = model.hidden_states(&sentence.tokens);
    Ok(SpaceSample {
        id: sentence.id.clone(),
        language: sentence.language.clone(),
        representation: mean_pool(&states, d),
    })
}

/// Averages row-major `n × d` states into one `d`-vector.
pub fn mean_pool(states: &[f64], d: usize) -> Vec<f64> {
    let n = states.len() / d;
    let mut out = vec![0.0; d];
    for row in states.chunks_exact(d) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n as f64;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChDegeneracy {
    /// Within-cluster scatter vanishes while clusters are apart: value is +∞.
    ZeroWithinScatter,
    /// All points coincide: value is reported as 0.
    NoDispersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChIndex {
    pub value: f64,
    pub between: f64,
    pub within: f64,
    pub clusters: usize,
    pub points: usize,
    pub degenerate: Option<ChDegeneracy>,
}

/// Relative size below which a scatter term is treated as zero.
const SCATTER_EPS: f64 = 1e-12;

/// `[tr(B)/(k-1)] / [tr(W)/(n-k)]` over the clusters given by `labels`.
pub fn calinski_harabasz<L: Ord>(points: &[Vec<f64>], labels: &[L]) -> Result<ChIndex> {
    if points.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("representation entries".into()));
    }
    let mut clusters: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    let k = clusters.len();
    if k < 2 {
        return Err(Error::Analysis(format!("need at least 2 clusters, got {k}")));
    }
    if n <= k {
        return Err(Error::Analysis(format!("need more points ({n}) than clusters ({k})")));
    }
    let centroid = |idx: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        for &i in idx {
            for (cv, pv) in c.iter_mut().zip(&points[i]) {
                *cv += pv;
            }
        }
        c.iter_mut().for_each(|v| *v /= idx.len() as f64);
        c
    };
    let all: Vec<usize> = (0..n).collect();
    let global = centroid(&all);
    let mut between = 0.0;
    let mut within = 0.0;
    for members in clusters.values() {
        let c = centroid(members);
        between += members.len() as f64 * sq_dist(&c, &global);
        within += members.iter().map(|&i| sq_dist(&points[i], &c)).sum::<f64>();
    }
    let total: f64 = points.iter().map(|p| sq_dist(p, &global)).sum();
    let scale = total.max(between + within);
    let (value, degenerate) = if scale <= f64::MIN_POSITIVE {
        (0.0, Some(ChDegeneracy::NoDispersion))
    } else if within <= SCATTER_EPS * scale {
        (f64::INFINITY, Some(ChDegeneracy::ZeroWithinScatter))
    } else {
        ((between / (k - 1) as f64) / (within / (n - k) as f64), None)
    };
    Ok(ChIndex {
        value,
        between,
        within,
        clusters: k,
        points: n,
        degenerate,
    })
}

/// CH index of sentence representations clustered by language.
pub fn language_ch(samples: &[SpaceSample]) -> Result<ChIndex> {
    let points: Vec<Vec<f64>> = samples.iter().map(|s| s.representation.clone()).collect();
    let labels: Vec<&str> = samples.iter().map(|s| s.language.as_str()).collect();
    calinski_harabasz(&points, &labels)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub id: String,
    pub language: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub points: Vec<PcaPoint>,
    /// The two leading covariance eigenvalues (sample covariance, n−1).
    pub variances: [f64; 2],
    pub components: [Vec<f64>; 2],
}

/// Projects centred samples onto the two leading principal directions. Each
/// direction is signed so that its largest-magnitude entry is positive.
pub fn pca_2d(samples: &[SpaceSample]) -> Result<PcaProjection> {
    let n = samples.len();
    if n < 3 {
        return Err(Error::Analysis(format!("PCA needs at least 3 samples, got {n}")));
    }
    let d = samples[0].representation.len();
    if d < 2 {
        return Err(Error::Analysis("PCA needs at least 2 dimensions".into()));
    }
    if samples.iter().any(|s| s.representation.len() != d) {
        return Err(Error::Shape("samples differ in dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.representation) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| samples[i].representation[j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let component = |idx: usize| -> Vec<f64> {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let first = component(order[0]);
    let mut second = component(order[1]);
    let lambda1 = eig.eigenvalues[order[0]].max(0.0);
    let mut lambda2 = eig.eigenvalues[order[1]].max(0.0);
    if lambda2 <= SCATTER_EPS * lambda1.max(f64::MIN_POSITIVE) {
        warn!("data has rank < 2; second PCA coordinate set to zero");
        second.iter_mut().for_each(|x| *x = 0.0);
        lambda2 = 0.0;
    }
    let points = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let row = centred.row(i);
            PcaPoint {
                id: s.id.clone(),
                language: s.language.clone(),
                x: row.iter().zip(&first).map(|(a, b)| a * b).sum(),
                y: row.iter().zip(&second).map(|(a, b)| a * b).sum(),
            }
        })
        .collect();
    Ok(PcaProjection {
        points,
        variances: [lambda1, lambda2],
        components: [first, second],
    })
}

/// Writes `id,language,x,y` rows with a header line.
pub fn write_pca_csv<W: Write>(mut out: W, points: &[PcaPoint]) -> Result<()> {
    let io = |e| Error::io("write PCA csv", e);
    writeln!(out, "id,language,x,y").map_err(io)?;
    for p in points {
        writeln!(out, "{},{},{},{}", csv_field(&p.id), csv_field(&p.language), p.x, p.y).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn save_pca_csv(path: &Path, points: &[PcaPoint]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    write_pca_csv(std::io::BufWriter::new(file), points)
}
