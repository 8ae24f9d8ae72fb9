//! Annotated datasets, their JSONL representation, and construction of the
//! derived training sets: translated (`D_T`, ingested), code-switched
//! (`D_ST`, `D_TS`), unlabeled pools and shuffled merges.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{decode_tags, encode_spans, is_well_formed, LabelTag, SpanAnnotation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub id: String,
    pub language: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<LabelTag>>,
}

impl AnnotatedSentence {
    pub fn labeled(
        id: impl Into<String>,
        language: impl Into<String>,
        tokens: Vec<String>,
        tags: Vec<LabelTag>,
    ) -> Result<Self> {
        let sentence = AnnotatedSentence {
            id: id.into(),
            language: language.into(),
            tokens,
            tags: Some(tags),
        };
        sentence.validate()?;
        Ok(sentence)
    }

    pub fn from_spans(
        id: impl Into<String>,
        language: impl Into<String>,
        tokens: Vec<String>,
        spans: &[SpanAnnotation],
    ) -> Result<Self> {
        let tags = encode_spans(tokens.len(), spans)?;
        Self::labeled(id, language, tokens, tags)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.tags.is_some()
    }

    /// Decoded aspect spans; empty for unlabeled sentences.
    pub fn spans(&self) -> Vec<SpanAnnotation> {
        self.tags.as_deref().map(decode_tags).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(tags) = &self.tags {
            if tags.len() != self.tokens.len() {
                return Err(Error::Dataset(format!(
                    "sentence {:?}: {} tags for {} tokens",
                    self.id,
                    tags.len(),
                    self.tokens.len()
                )));
            }
            if !is_well_formed(tags) {
                return Err(Error::Dataset(format!(
                    "sentence {:?}: ill-formed tag sequence",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Source,
    Translated,
    CodeSwitchedSt,
    CodeSwitchedTs,
    Unlabeled,
    /// Held-out labeled data (dev or test).
    Evaluation,
    /// Shuffled union of labeled datasets with different roles.
    Merged,
}

impl DatasetRole {
    pub fn is_labeled(self) -> bool {
        self != DatasetRole::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: String,
    pub target: Option<String>,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: Option<String>) -> Self {
        LanguagePair {
            source: source.into(),
            target,
        }
    }

    fn infer(sentences: &[AnnotatedSentence]) -> Self {
        let mut seen: Vec<&str> = Vec::new();
        for s in sentences {
            if !seen.contains(&s.language.as_str()) {
                seen.push(&s.language);
            }
        }
        LanguagePair {
            source: seen.first().map(|s| s.to_string()).unwrap_or_default(),
            target: seen.get(1).map(|s| s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<AnnotatedSentence>,
    pub role: DatasetRole,
    pub languages: LanguagePair,
}

impl Dataset {
    /// Builds a dataset, checking every sentence against the role.
    pub fn new(sentences: Vec<AnnotatedSentence>, role: DatasetRole) -> Result<Self> {
        for s in &sentences {
            s.validate()?;
            if s.is_labeled() != role.is_labeled() {
                return Err(Error::Dataset(format!(
                    "sentence {:?} is {} but the dataset role is {:?}",
                    s.id,
                    if s.is_labeled() { "labeled" } else { "unlabeled" },
                    role
                )));
            }
        }
        let languages = LanguagePair::infer(&sentences);
        Ok(Dataset {
            sentences,
            role,
            languages,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.role.is_labeled()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AnnotatedSentence> {
        self.sentences.iter()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    language: String,
    tokens: Vec<String>,
    #[serde(default)]
    tags: Option<Vec<String>>,
}

/// Reads a JSONL file of sentences without checking them against a role.
pub fn load_sentences(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut sentences = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| record_err(format!("malformed record: {e}")))?;
        let tags = match raw.tags {
            None => None,
            Some(names) => {
                let mut tags = Vec::with_capacity(names.len());
                for name in &names {
                    let tag = name
                        .parse::<LabelTag>()
                        .map_err(|_| record_err(format!("tag {name:?} is not in the tag vocabulary")))?;
                    tags.push(tag);
                }
                Some(tags)
            }
        };
        let sentence = AnnotatedSentence {
            id: raw.id,
            language: raw.language,
            tokens: raw.tokens,
            tags,
        };
        sentence.validate().map_err(|e| record_err(e.to_string()))?;
        sentences.push(sentence);
    }
    Ok(sentences)
}

pub fn load_corpus(path: &Path, expect_role: DatasetRole) -> Result<Dataset> {
    let sentences = load_sentences(path)?;
    if sentences.is_empty() {
        warn!("{}: no sentences", path.display());
    }
    for (i, s) in sentences.iter().enumerate() {
        if s.is_labeled() != expect_role.is_labeled() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!(
                    "expected {} records for role {:?}",
                    if expect_role.is_labeled() { "labeled" } else { "unlabeled" },
                    expect_role
                ),
            });
        }
    }
    let ds = Dataset::new(sentences, expect_role)?;
    log::info!("{}: loaded {} sentences", path.display(), ds.len());
    Ok(ds)
}

pub fn write_sentences<'a, W: Write>(
    writer: W,
    sentences: impl IntoIterator<Item = &'a AnnotatedSentence>,
) -> Result<()> {
    let mut writer = BufWriter::new(writer);
    for s in sentences {
        serde_json::to_writer(&mut writer, s).map_err(|e| Error::json("serialize sentence", e))?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("write sentence", e))?;
    }
    writer.flush().map_err(|e| Error::io("flush", e))
}

pub fn save_corpus(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    write_sentences(file, &ds.sentences)
}

/// One line of an alignment file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub source_id: String,
    pub target_id: String,
    pub alignments: Vec<[usize; 2]>,
}

pub fn load_alignments(path: &Path) -> Result<Vec<AlignmentRecord>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("malformed alignment record: {e}"),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_alignments(records: &[AlignmentRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(|e| Error::json("serialize alignment", e))?;
        writer.write_all(b"\n").map_err(|e| Error::io("write alignment", e))?;
    }
    writer.flush().map_err(|e| Error::io("flush", e))
}

/// A source sentence, its translation, and the span-index alignment between
/// their decoded aspect lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub source: AnnotatedSentence,
    pub target: AnnotatedSentence,
    pub alignment: Vec<(usize, usize)>,
}

impl ParallelPair {
    /// Returns why the alignment is not a sentiment-preserving bijection
    /// between the two span lists, or `None` if it is.
    pub fn alignment_problem(&self) -> Option<String> {
        let src = self.source.spans();
        let tgt = self.target.spans();
        if src.len() != tgt.len() {
            return Some(format!(
                "{} source aspects vs {} target aspects",
                src.len(),
                tgt.len()
            ));
        }
        let mut src_seen = vec![false; src.len()];
        let mut tgt_seen = vec![false; tgt.len()];
        for &(s, t) in &self.alignment {
            if s >= src.len() || t >= tgt.len() {
                return Some(format!("alignment ({s}, {t}) out of range"));
            }
            if src_seen[s] || tgt_seen[t] {
                return Some(format!("alignment ({s}, {t}) is not one-to-one"));
            }
            if src[s].sentiment != tgt[t].sentiment {
                return Some(format!("alignment ({s}, {t}) joins different sentiments"));
            }
            src_seen[s] = true;
            tgt_seen[t] = true;
        }
        if let Some(missing) = src_seen.iter().position(|seen| !seen) {
            return Some(format!("source aspect {missing} has no alignment"));
        }
        None
    }
}

/// Joins source and target datasets by the ids listed in the alignment records.
pub fn pair_up(
    source: &Dataset,
    target: &Dataset,
    alignments: &[AlignmentRecord],
) -> Result<Vec<ParallelPair>> {
    let src_by_id: HashMap<&str, &AnnotatedSentence> =
        source.iter().map(|s| (s.id.as_str(), s)).collect();
    let tgt_by_id: HashMap<&str, &AnnotatedSentence> =
        target.iter().map(|s| (s.id.as_str(), s)).collect();
    alignments
        .iter()
        .map(|rec| {
            let src = src_by_id.get(rec.source_id.as_str()).ok_or_else(|| {
                Error::IdMismatch(format!("alignment names unknown source id {:?}", rec.source_id))
            })?;
            let tgt = tgt_by_id.get(rec.target_id.as_str()).ok_or_else(|| {
                Error::IdMismatch(format!("alignment names unknown target id {:?}", rec.target_id))
            })?;
            Ok(ParallelPair {
                source: (*src).clone(),
                target: (*tgt).clone(),
                alignment: rec.alignments.iter().map(|a| (a[0], a[1])).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchDirection {
    /// Source context, target-language aspect terms.
    SourceToTarget,
    /// Target context, source-language aspect terms.
    TargetToSource,
}

impl SwitchDirection {
    pub fn suffix(self) -> &'static str {
        match self {
            SwitchDirection::SourceToTarget => "st",
            SwitchDirection::TargetToSource => "ts",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub processed: usize,
    pub written: usize,
    pub skipped: Vec<SkippedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub source_id: String,
    pub target_id: String,
    pub reason: String,
}

/// Replaces every aligned aspect span of the context sentence with the
/// tokens of its counterpart and regenerates the tags.
fn switch_pair(pair: &ParallelPair, direction: SwitchDirection) -> Result<AnnotatedSentence> {
    let (context, donor, links): (&AnnotatedSentence, &AnnotatedSentence, HashMap<usize, usize>) =
        match direction {
            SwitchDirection::SourceToTarget => (
                &pair.source,
                &pair.target,
                pair.alignment.iter().copied().collect(),
            ),
            SwitchDirection::TargetToSource => (
                &pair.target,
                &pair.source,
                pair.alignment.iter().map(|&(s, t)| (t, s)).collect(),
            ),
        };
    let context_spans = context.spans();
    let donor_spans = donor.spans();
    let mut tokens = Vec::with_capacity(context.len());
    let mut spans = Vec::with_capacity(context_spans.len());
    let mut cursor = 0;
    for (i, span) in context_spans.iter().enumerate() {
        tokens.extend_from_slice(&context.tokens[cursor..span.start]);
        let d = donor_spans[links[&i]];
        let start = tokens.len();
        tokens.extend_from_slice(&donor.tokens[d.start..=d.end]);
        spans.push(SpanAnnotation::new(start, tokens.len() - 1, span.sentiment));
        cursor = span.end + 1;
    }
    tokens.extend_from_slice(&context.tokens[cursor..]);
    AnnotatedSentence::from_spans(
        format!("{}:{}", context.id, direction.suffix()),
        context.language.clone(),
        tokens,
        &spans,
    )
}

pub fn build_code_switched(
    pairs: &[ParallelPair],
    direction: SwitchDirection,
) -> Result<(Dataset, SkipReport)> {
    let mut report = SkipReport {
        processed: pairs.len(),
        ..SkipReport::default()
    };
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if !pair.source.is_labeled() || !pair.target.is_labeled() {
            return Err(Error::Dataset(format!(
                "pair ({:?}, {:?}) is unlabeled",
                pair.source.id, pair.target.id
            )));
        }
        if let Some(reason) = pair.alignment_problem() {
            warn!(
                "skipping pair ({:?}, {:?}): {reason}",
                pair.source.id, pair.target.id
            );
            report.skipped.push(SkippedPair {
                source_id: pair.source.id.clone(),
                target_id: pair.target.id.clone(),
                reason,
            });
            continue;
        }
        out.push(switch_pair(pair, direction)?);
    }
    report.written = out.len();
    let role = match direction {
        SwitchDirection::SourceToTarget => DatasetRole::CodeSwitchedSt,
        SwitchDirection::TargetToSource => DatasetRole::CodeSwitchedTs,
    };
    let languages = match pairs.first() {
        Some(p) => LanguagePair::new(p.source.language.clone(), Some(p.target.language.clone())),
        None => LanguagePair::new("", None),
    };
    Ok((
        Dataset {
            sentences: out,
            role,
            languages,
        },
        report,
    ))
}

pub fn strip_labels(ds: &Dataset) -> Dataset {
    Dataset {
        sentences: ds
            .sentences
            .iter()
            .map(|s| AnnotatedSentence {
                tags: None,
                ..s.clone()
            })
            .collect(),
        role: DatasetRole::Unlabeled,
        languages: ds.languages.clone(),
    }
}

/// Concatenates the datasets and shuffles the result with a seeded RNG.
pub fn merge(datasets: &[&Dataset], shuffle_seed: u64) -> Result<Dataset> {
    let Some(first) = datasets.first() else {
        return Err(Error::Empty("merge needs at least one dataset".into()));
    };
    if datasets.iter().any(|d| d.is_labeled() != first.is_labeled()) {
        return Err(Error::Dataset(
            "cannot merge labeled and unlabeled datasets".into(),
        ));
    }
    let mut sentences: Vec<AnnotatedSentence> = datasets
        .iter()
        .flat_map(|d| d.sentences.iter().cloned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    sentences.shuffle(&mut rng);
    let role = if datasets.iter().all(|d| d.role == first.role) {
        first.role
    } else {
        DatasetRole::Merged
    };
    let languages = LanguagePair::infer(&sentences);
    Ok(Dataset {
        sentences,
        role,
        languages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagging::Polarity;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn sent(id: &str, lang: &str, text: &str, spans: &[SpanAnnotation]) -> AnnotatedSentence {
        AnnotatedSentence::from_spans(id, lang, toks(text), spans).unwrap()
    }

    #[test]
    fn code_switch_replaces_aspect_and_regenerates_tags() {
        let pair = ParallelPair {
            source: sent("s1", "en", "Great ice cream .", &[SpanAnnotation::new(1, 2, Polarity::Pos)]),
            target: sent("t1", "fr", "Bonnes glaces .", &[SpanAnnotation::new(1, 1, Polarity::Pos)]),
            alignment: vec![(0, 0)],
        };
        let (ds, report) = build_code_switched(&[pair.clone()], SwitchDirection::SourceToTarget).unwrap();
        assert_eq!(ds.sentences[0].tokens, toks("Great glaces ."));
        assert_eq!(
            ds.sentences[0].tags.as_ref().unwrap(),
            &vec![LabelTag::O, "S-POS".parse().unwrap(), LabelTag::O]
        );
        assert_eq!(ds.sentences[0].language, "en");
        assert_eq!(report.written, 1);
        assert_eq!(ds.role, DatasetRole::CodeSwitchedSt);

        let (ts, _) = build_code_switched(&[pair], SwitchDirection::TargetToSource).unwrap();
        assert_eq!(ts.sentences[0].tokens, toks("Bonnes ice cream ."));
        assert_eq!(ts.sentences[0].spans(), vec![SpanAnnotation::new(1, 2, Polarity::Pos)]);
    }

    #[test]
    fn pair_without_aspects_passes_through() {
        let pair = ParallelPair {
            source: sent("s", "en", "we sat down .", &[]),
            target: sent("t", "fr", "on s' assoit .", &[]),
            alignment: vec![],
        };
        let (ds, report) = build_code_switched(&[pair.clone()], SwitchDirection::SourceToTarget).unwrap();
        assert_eq!(ds.sentences[0].tokens, pair.source.tokens);
        assert!(ds.sentences[0].tags.as_ref().unwrap().iter().all(|t| *t == LabelTag::O));
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn missing_alignment_is_skipped_and_counted() {
        let pair = ParallelPair {
            source: sent("s", "en", "good pizza and bad wine", &[
                SpanAnnotation::new(1, 1, Polarity::Pos),
                SpanAnnotation::new(4, 4, Polarity::Neg),
            ]),
            target: sent("t", "fr", "bonne pizza et mauvais vin", &[
                SpanAnnotation::new(1, 1, Polarity::Pos),
                SpanAnnotation::new(4, 4, Polarity::Neg),
            ]),
            alignment: vec![(0, 0)],
        };
        let (ds, report) = build_code_switched(&[pair], SwitchDirection::SourceToTarget).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.processed, 1);
        assert_eq!(report.skipped.len(), 1);
        assert!(report.skipped[0].reason.contains("no alignment"));
    }

    #[test]
    fn sentiment_mismatch_is_skipped() {
        let pair = ParallelPair {
            source: sent("s", "en", "good pizza", &[SpanAnnotation::new(1, 1, Polarity::Pos)]),
            target: sent("t", "fr", "bonne pizza", &[SpanAnnotation::new(1, 1, Polarity::Neg)]),
            alignment: vec![(0, 0)],
        };
        let (_, report) = build_code_switched(&[pair], SwitchDirection::TargetToSource).unwrap();
        assert_eq!(report.skipped.len(), 1);
    }

    #[test]
    fn strip_is_idempotent() {
        let ds = Dataset::new(
            vec![sent("a", "fr", "bonnes glaces", &[SpanAnnotation::new(1, 1, Polarity::Pos)])],
            DatasetRole::Source,
        )
        .unwrap();
        let once = strip_labels(&ds);
        assert_eq!(once.role, DatasetRole::Unlabeled);
        assert_eq!(once.len(), 1);
        assert_eq!(once.sentences[0].tokens, ds.sentences[0].tokens);
        assert!(once.sentences[0].tags.is_none());
        assert_eq!(strip_labels(&once), once);
        let empty = Dataset::new(vec![], DatasetRole::Source).unwrap();
        assert!(strip_labels(&empty).is_empty());
    }

    #[test]
    fn merge_is_seeded_and_sizes_add() {
        let a = Dataset::new(
            (0..10).map(|i| sent(&format!("a{i}"), "en", "x y", &[])).collect(),
            DatasetRole::Source,
        )
        .unwrap();
        let b = Dataset::new(
            (0..7).map(|i| sent(&format!("b{i}"), "fr", "x y", &[])).collect(),
            DatasetRole::Translated,
        )
        .unwrap();
        let m1 = merge(&[&a, &b], 3).unwrap();
        let m2 = merge(&[&a, &b], 3).unwrap();
        assert_eq!(m1.len(), 17);
        assert_eq!(m1, m2);
        assert_eq!(m1.role, DatasetRole::Merged);
        let single = merge(&[&a], 9).unwrap();
        let mut ids: Vec<_> = single.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        let mut orig: Vec<_> = a.iter().map(|s| s.id.clone()).collect();
        orig.sort();
        assert_eq!(ids, orig);
        let u = strip_labels(&a);
        assert!(merge(&[&a, &u], 0).is_err());
    }

    #[test]
    fn dataset_role_is_checked() {
        let labeled = sent("a", "en", "x", &[]);
        assert!(Dataset::new(vec![labeled], DatasetRole::Unlabeled).is_err());
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"language\":\"en\",\"tokens\":[\"x\"],\"tags\":[\"O\"]}\n\
             {\"id\":\"b\",\"language\":\"en\",\"tokens\":[\"x\",\"y\"],\"tags\":[\"O\"]}\n",
        )
        .unwrap();
        match load_corpus(&path, DatasetRole::Source) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }

        std::fs::write(
            &path,
            "{\"id\":\"a\",\"language\":\"en\",\"tokens\":[\"x\"],\"tags\":[\"B-FOO\"]}\n",
        )
        .unwrap();
        let err = load_corpus(&path, DatasetRole::Source).unwrap_err();
        assert!(err.to_string().contains("tag vocabulary"), "{err}");

        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path, DatasetRole::Source).unwrap().is_empty());
    }

    #[test]
    fn save_load_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(
            vec![
                sent("a", "en", "Great ice cream .", &[SpanAnnotation::new(1, 2, Polarity::Pos)]),
                sent("b", "en", "\"quoted\" é", &[]),
            ],
            DatasetRole::Source,
        )
        .unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        save_corpus(&ds, &p1).unwrap();
        let loaded = load_corpus(&p1, DatasetRole::Source).unwrap();
        assert_eq!(loaded.sentences, ds.sentences);
        save_corpus(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let unlabeled = strip_labels(&ds);
        save_corpus(&unlabeled, &p1).unwrap();
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(!text.contains("tags"));
        assert_eq!(load_corpus(&p1, DatasetRole::Unlabeled).unwrap().len(), 2);
    }
}
