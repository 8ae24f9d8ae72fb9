//! Templated bilingual review corpus for desk-scale experiments.
//!
//! Sentences are drawn from a small set of restaurant-review templates. The
//! second language is produced by deterministic word-for-word substitution
//! through a fixed lexicon; aspect phrases map to phrases that may differ in
//! length ("ice cream" → "glaces"), and the aspect alignment is the identity
//! on span order. Everything is driven by one seed.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_code_switched, save_alignments, save_corpus, strip_labels, AlignmentRecord,
    AnnotatedSentence, Dataset, DatasetRole, ParallelPair, SkipReport, SwitchDirection,
};
use crate::error::{Error, Result};
use crate::tagging::{Polarity, SpanAnnotation};

const ASPECTS: &[(&str, &str)] = &[
    ("ice cream", "glaces"),
    ("pizza", "pizza"),
    ("pasta", "pâtes"),
    ("wine list", "carte des vins"),
    ("staff", "personnel"),
    ("waiter", "serveur"),
    ("service", "service"),
    ("dessert", "dessert"),
    ("fish", "poisson"),
    ("steak", "steak"),
    ("prices", "prix"),
    ("decor", "décor"),
    ("atmosphere", "ambiance"),
    ("music", "musique"),
    ("bread", "pain"),
    ("salad", "salade"),
    ("duck confit", "confit de canard"),
    ("goat cheese", "fromage de chèvre"),
    ("house wine", "vin maison"),
    ("chocolate cake", "gâteau au chocolat"),
    ("soup", "soupe"),
    ("portions", "portions"),
    ("menu", "carte"),
    ("terrace", "terrasse"),
    ("coffee", "café"),
    ("seafood platter", "plateau de fruits de mer"),
    ("owner", "patron"),
    ("lamb", "agneau"),
    ("fries", "frites"),
    ("sushi rolls", "makis"),
];

const POSITIVE: &[(&str, &str)] = &[
    ("great", "génial"),
    ("delicious", "délicieux"),
    ("excellent", "excellent"),
    ("friendly", "aimable"),
    ("amazing", "incroyable"),
    ("perfect", "parfait"),
    ("fresh", "frais"),
    ("good", "bon"),
];

const NEGATIVE: &[(&str, &str)] = &[
    ("terrible", "terrible"),
    ("awful", "affreux"),
    ("cold", "froid"),
    ("rude", "impoli"),
    ("bland", "fade"),
    ("slow", "lent"),
    ("bad", "mauvais"),
    ("overpriced", "hors de prix"),
];

const NEUTRAL: &[(&str, &str)] = &[
    ("okay", "correct"),
    ("average", "moyen"),
    ("standard", "standard"),
    ("ordinary", "ordinaire"),
    ("fine", "passable"),
    ("acceptable", "acceptable"),
];

const FUNCTION_WORDS: &[(&str, &str)] = &[
    ("the", "le"),
    ("was", "était"),
    ("were", "étaient"),
    ("really", "vraiment"),
    ("not", "pas"),
    ("we", "nous"),
    ("loved", "avons adoré"),
    ("hated", "avons détesté"),
    ("ordered", "avons commandé"),
    ("but", "mais"),
    ("and", "et"),
    ("i", "je"),
    ("thought", "trouvais"),
    ("will", "allons"),
    ("come", "revenir"),
    ("back", "vite"),
    ("it", "c'"),
    ("a", "une"),
    ("busy", "chargée"),
    ("night", "soirée"),
    ("went", "sommes allés"),
    ("there", "là-bas"),
    ("for", "pour"),
    ("dinner", "dîner"),
    (".", "."),
    ("!", "!"),
];

#[derive(Debug, Clone, Copy)]
enum AspectPolarity {
    /// Polarity of adjective slot `n`.
    Of(usize),
    /// Positive adjective slot negated.
    Negated,
    Fixed(Polarity),
}

struct Template {
    pattern: &'static str,
    aspects: &'static [AspectPolarity],
    /// Adjective slot 0 must be positive.
    positive_adjective: bool,
    weight: u32,
}

const TEMPLATES: &[Template] = &[
    Template { pattern: "the {A0} was {J0} .", aspects: &[AspectPolarity::Of(0)], positive_adjective: false, weight: 4 },
    Template { pattern: "the {A0} was really {J0} .", aspects: &[AspectPolarity::Of(0)], positive_adjective: false, weight: 2 },
    Template { pattern: "the {A0} was not {J0} .", aspects: &[AspectPolarity::Negated], positive_adjective: true, weight: 2 },
    Template { pattern: "{J0} {A0} !", aspects: &[AspectPolarity::Of(0)], positive_adjective: false, weight: 3 },
    Template { pattern: "we loved the {A0} .", aspects: &[AspectPolarity::Fixed(Polarity::Pos)], positive_adjective: false, weight: 2 },
    Template { pattern: "we hated the {A0} .", aspects: &[AspectPolarity::Fixed(Polarity::Neg)], positive_adjective: false, weight: 2 },
    Template { pattern: "we ordered the {A0} .", aspects: &[AspectPolarity::Fixed(Polarity::Neu)], positive_adjective: false, weight: 2 },
    Template { pattern: "the {A0} was {J0} but the {A1} was {J1} .", aspects: &[AspectPolarity::Of(0), AspectPolarity::Of(1)], positive_adjective: false, weight: 3 },
    Template { pattern: "the {A0} and the {A1} were {J0} .", aspects: &[AspectPolarity::Of(0), AspectPolarity::Of(0)], positive_adjective: false, weight: 2 },
    Template { pattern: "i thought the {A0} was {J0} .", aspects: &[AspectPolarity::Of(0)], positive_adjective: false, weight: 2 },
    Template { pattern: "we will come back .", aspects: &[], positive_adjective: false, weight: 1 },
    Template { pattern: "it was a busy night .", aspects: &[], positive_adjective: false, weight: 1 },
    Template { pattern: "we went there for dinner .", aspects: &[], positive_adjective: false, weight: 1 },
];

/// A sentence before rendering into either language.
#[derive(Debug, Clone)]
struct Draft {
    template: usize,
    aspects: Vec<usize>,
    /// (polarity, lexicon index) per adjective slot.
    adjectives: Vec<(Polarity, usize)>,
}

fn lexicon(p: Polarity) -> &'static [(&'static str, &'static str)] {
    match p {
        Polarity::Pos => POSITIVE,
        Polarity::Neg => NEGATIVE,
        Polarity::Neu => NEUTRAL,
    }
}

fn pick(pair: &(&'static str, &'static str), target: bool) -> &'static str {
    if target {
        pair.1
    } else {
        pair.0
    }
}

impl Draft {
    fn sample(rng: &mut ChaCha8Rng) -> Draft {
        let total: u32 = TEMPLATES.iter().map(|t| t.weight).sum();
        let mut roll = rng.random_range(0..total);
        let template = TEMPLATES
            .iter()
            .position(|t| {
                if roll < t.weight {
                    true
                } else {
                    roll -= t.weight;
                    false
                }
            })
            .expect("roll within total weight");
        let t = &TEMPLATES[template];
        let n_aspects = t.aspects.len();
        let mut aspects = Vec::with_capacity(n_aspects);
        while aspects.len() < n_aspects {
            let a = rng.random_range(0..ASPECTS.len());
            if !aspects.contains(&a) {
                aspects.push(a);
            }
        }
        let n_adj = t.pattern.matches("{J").count();
        let adjectives = (0..n_adj)
            .map(|slot| {
                let p = if slot == 0 && t.positive_adjective {
                    Polarity::Pos
                } else {
                    *Polarity::ALL.choose(rng).expect("non-empty")
                };
                (p, rng.random_range(0..lexicon(p).len()))
            })
            .collect();
        Draft {
            template,
            aspects,
            adjectives,
        }
    }

    fn aspect_polarity(&self, slot: usize) -> Polarity {
        match TEMPLATES[self.template].aspects[slot] {
            AspectPolarity::Of(j) => self.adjectives[j].0,
            AspectPolarity::Negated => Polarity::Neg,
            AspectPolarity::Fixed(p) => p,
        }
    }

    fn render(&self, target: bool) -> (Vec<String>, Vec<SpanAnnotation>) {
        let mut tokens: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for piece in TEMPLATES[self.template].pattern.split_whitespace() {
            if let Some(slot) = piece.strip_prefix("{A").and_then(|s| s.strip_suffix('}')) {
                let slot: usize = slot.parse().expect("template slot");
                let start = tokens.len();
                tokens.extend(pick(&ASPECTS[self.aspects[slot]], target).split(' ').map(String::from));
                spans.push(SpanAnnotation::new(start, tokens.len() - 1, self.aspect_polarity(slot)));
            } else if let Some(slot) = piece.strip_prefix("{J").and_then(|s| s.strip_suffix('}')) {
                let slot: usize = slot.parse().expect("template slot");
                let (p, i) = self.adjectives[slot];
                tokens.extend(pick(&lexicon(p)[i], target).split(' ').map(String::from));
            } else {
                let word = if target {
                    FUNCTION_WORDS
                        .iter()
                        .find(|(en, _)| *en == piece)
                        .map(|(_, fr)| *fr)
                        .unwrap_or(piece)
                } else {
                    piece
                };
                tokens.extend(word.split(' ').map(String::from));
            }
        }
        (tokens, spans)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub source_language: String,
    pub target_language: String,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub unlabeled_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 2016,
            source_language: "en".into(),
            target_language: "fr".into(),
            train_size: 400,
            dev_size: 100,
            test_size: 200,
            unlabeled_size: 400,
        }
    }
}

/// All splits of one generated corpus.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Labeled source-language training set.
    pub source: Dataset,
    /// Its translation.
    pub translated: Dataset,
    pub alignments: Vec<AlignmentRecord>,
    pub code_switched_st: Dataset,
    pub code_switched_ts: Dataset,
    pub switch_reports: [SkipReport; 2],
    /// Source-language dev set used for model selection.
    pub source_dev: Dataset,
    /// Translation of the dev set, for cross-language comparisons on
    /// parallel content. Never used for selection.
    pub target_dev: Dataset,
    /// Held-out target-language test set.
    pub target_test: Dataset,
    /// Target-language training sentences without labels.
    pub unlabeled: Dataset,
}

impl SyntheticCorpus {
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        let (src, tgt) = (&config.source_language, &config.target_language);
        if src == tgt {
            return Err(Error::Config("source and target languages must differ".into()));
        }
        let drafts = |split: u64, n: usize| -> Vec<Draft> {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(31).wrapping_add(split));
            (0..n).map(|_| Draft::sample(&mut rng)).collect()
        };
        let render = |drafts: &[Draft], split: &str, lang: &str, target: bool| -> Result<Vec<AnnotatedSentence>> {
            drafts
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let (tokens, spans) = d.render(target);
                    AnnotatedSentence::from_spans(format!("{lang}-{split}-{i:05}"), lang, tokens, &spans)
                })
                .collect()
        };

        let train = drafts(1, config.train_size);
        let source = Dataset::new(render(&train, "train", src, false)?, DatasetRole::Source)?;
        let translated = Dataset::new(render(&train, "train", tgt, true)?, DatasetRole::Translated)?;
        let alignments: Vec<AlignmentRecord> = source
            .iter()
            .zip(translated.iter())
            .map(|(s, t)| AlignmentRecord {
                source_id: s.id.clone(),
                target_id: t.id.clone(),
                alignments: (0..s.spans().len()).map(|i| [i, i]).collect(),
            })
            .collect();
        let pairs: Vec<ParallelPair> = source
            .iter()
            .zip(translated.iter())
            .zip(&alignments)
            .map(|((s, t), a)| ParallelPair {
                source: s.clone(),
                target: t.clone(),
                alignment: a.alignments.iter().map(|x| (x[0], x[1])).collect(),
            })
            .collect();
        let (code_switched_st, st_report) = build_code_switched(&pairs, SwitchDirection::SourceToTarget)?;
        let (code_switched_ts, ts_report) = build_code_switched(&pairs, SwitchDirection::TargetToSource)?;

        let dev = drafts(2, config.dev_size);
        let source_dev = Dataset::new(render(&dev, "dev", src, false)?, DatasetRole::Evaluation)?;
        let target_dev = Dataset::new(render(&dev, "dev", tgt, true)?, DatasetRole::Evaluation)?;
        let target_test = Dataset::new(
            render(&drafts(3, config.test_size), "test", tgt, true)?,
            DatasetRole::Evaluation,
        )?;
        let unlabeled = strip_labels(&Dataset::new(
            render(&drafts(4, config.unlabeled_size), "unl", tgt, true)?,
            DatasetRole::Source,
        )?);
        Ok(SyntheticCorpus {
            source,
            translated,
            alignments,
            code_switched_st,
            code_switched_ts,
            switch_reports: [st_report, ts_report],
            source_dev,
            target_dev,
            target_test,
            unlabeled,
        })
    }

    /// Every sentence a model may see during training, in a fixed order;
    /// build vocabularies from this so teachers and students agree.
    pub fn vocabulary_sources(&self) -> impl Iterator<Item = &AnnotatedSentence> {
        self.source
            .iter()
            .chain(self.translated.iter())
            .chain(self.code_switched_st.iter())
            .chain(self.code_switched_ts.iter())
            .chain(self.unlabeled.iter())
    }

    /// Writes every split as JSONL into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        save_corpus(&self.source, &dir.join(files::SOURCE))?;
        save_corpus(&self.translated, &dir.join(files::TRANSLATED))?;
        save_alignments(&self.alignments, &dir.join(files::ALIGNMENTS))?;
        save_corpus(&self.code_switched_st, &dir.join(files::CODE_SWITCHED_ST))?;
        save_corpus(&self.code_switched_ts, &dir.join(files::CODE_SWITCHED_TS))?;
        save_corpus(&self.source_dev, &dir.join(files::SOURCE_DEV))?;
        save_corpus(&self.target_dev, &dir.join(files::TARGET_DEV))?;
        save_corpus(&self.target_test, &dir.join(files::TARGET_TEST))?;
        save_corpus(&self.unlabeled, &dir.join(files::UNLABELED))?;
        Ok(())
    }
}

/// File names used by [`SyntheticCorpus::write_dir`].
pub mod files {
    pub const SOURCE: &str = "source.jsonl";
    pub const TRANSLATED: &str = "translated.jsonl";
    pub const ALIGNMENTS: &str = "alignments.jsonl";
    pub const CODE_SWITCHED_ST: &str = "code_switched_st.jsonl";
    pub const CODE_SWITCHED_TS: &str = "code_switched_ts.jsonl";
    pub const SOURCE_DEV: &str = "source_dev.jsonl";
    pub const TARGET_DEV: &str = "target_dev.jsonl";
    pub const TARGET_TEST: &str = "target_test.jsonl";
    pub const UNLABELED: &str = "unlabeled.jsonl";
}
