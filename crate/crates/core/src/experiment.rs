//! The desk-scale cross-lingual transfer experiment on the synthetic corpus.
//!
//! One seed first runs a shared cross-entropy warm-up on `D_S ∪ D_T`, then
//! trains, from that common starting point:
//! a cross-entropy baseline and token- and sentiment-level contrastive models
//! on `D_S ∪ D_T`; a translation model on `D_T` alone; three contrastive
//! teachers on `D_T ∪ D_S`, `D_T ∪ D_ST`, `D_T ∪ D_TS`; and a student
//! initialized from the translation model and distilled from the uniform
//! fusion of the teachers on the unlabeled target pool. Model selection uses
//! the source-language dev set only.

use log::info;
use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate, language_ch, sentence_representation};
use crate::corpus::{merge, Dataset};
use crate::distillation::{run_distillation, Teacher, TeacherEnsemble};
use crate::error::Result;
use crate::model::{EncoderConfig, Tagger, Vocab};
use crate::synthetic::{SyntheticConfig, SyntheticCorpus};
use crate::trainer::{train, LossLevel, OptimizerConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: SyntheticConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub student: TrainConfig,
    /// Contrastive level used for the three teachers.
    pub teacher_level: LossLevel,
    /// Cross-entropy steps on `D_S ∪ D_T` shared by every arm before its
    /// own training starts; 0 trains every arm from the random init.
    pub warmup_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 32,
            max_steps: 600,
            eval_interval: 50,
            selection_window: 200,
            optimizer: OptimizerConfig::default(),
            ..TrainConfig::default()
        };
        let student = TrainConfig {
            max_steps: 300,
            selection_window: 150,
            learning_rate: 1e-3,
            ..train.clone()
        };
        ExperimentConfig {
            corpus: SyntheticConfig::default(),
            // Radius 3 lets a token see an opinion word a few positions away.
            encoder: EncoderConfig {
                window: 3,
                ..EncoderConfig::default()
            },
            train,
            student,
            teacher_level: LossLevel::Token,
            warmup_steps: 600,
        }
    }
}

/// Scores of one trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    /// Micro-F1 on the held-out target-language test set.
    pub target_f1: f64,
    /// Micro-F1 on the source-language dev set.
    pub dev_f1: f64,
    /// Calinski-Harabasz index of sentence representations grouped by
    /// language over the parallel source and target dev sets.
    pub language_ch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub untrained: ModelScore,
    pub cross_entropy: ModelScore,
    pub token_contrastive: ModelScore,
    pub sentiment_contrastive: ModelScore,
    pub translation: ModelScore,
    pub teachers: Vec<ModelScore>,
    pub student: ModelScore,
}

impl SeedOutcome {
    pub fn best_teacher_f1(&self) -> f64 {
        self.teachers.iter().map(|t| t.target_f1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Everything a seed needs that does not depend on the seed.
pub struct Prepared {
    pub corpus: SyntheticCorpus,
    pub vocab: Vocab,
    /// `D_S ∪ D_T`
    pub bilingual: Dataset,
    /// `D_T ∪ D_S`, `D_T ∪ D_ST`, `D_T ∪ D_TS`
    pub teacher_data: [(String, Dataset); 3],
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let corpus = SyntheticCorpus::generate(&config.corpus)?;
        let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
        let s = config.corpus.seed;
        let bilingual = merge(&[&corpus.source, &corpus.translated], s)?;
        let teacher_data = [
            ("D_T ∪ D_S".to_string(), merge(&[&corpus.translated, &corpus.source], s)?),
            ("D_T ∪ D_ST".to_string(), merge(&[&corpus.translated, &corpus.code_switched_st], s)?),
            ("D_T ∪ D_TS".to_string(), merge(&[&corpus.translated, &corpus.code_switched_ts], s)?),
        ];
        Ok(Prepared {
            corpus,
            vocab,
            bilingual,
            teacher_data,
        })
    }

    pub fn score(&self, model: &Tagger) -> Result<ModelScore> {
        let c = &self.corpus;
        let samples = c
            .source_dev
            .iter()
            .chain(c.target_dev.iter())
            .map(|s| sentence_representation(model, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelScore {
            target_f1: evaluate(model, &c.target_test)?.micro_f1,
            dev_f1: evaluate(model, &c.source_dev)?.micro_f1,
            language_ch: language_ch(&samples)?.value,
        })
    }

    pub fn run_seed(&self, config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
        let random = Tagger::new(
            EncoderConfig {
                init_seed: seed,
                ..config.encoder.clone()
            },
            self.vocab.clone(),
        );
        let dev = &self.corpus.source_dev;
        let with = |base: &TrainConfig, level: LossLevel| TrainConfig {
            level,
            seed,
            ..base.clone()
        };
        let init = if config.warmup_steps > 0 {
            let warm = TrainConfig {
                max_steps: config.warmup_steps,
                selection_window: 1,
                ..with(&config.train, LossLevel::None)
            };
            train(random.clone(), &self.bilingual, dev, &warm)?.0
        } else {
            random.clone()
        };
        let fit = |data: &Dataset, level: LossLevel| -> Result<Tagger> {
            Ok(train(init.clone(), data, dev, &with(&config.train, level))?.0)
        };

        let untrained = self.score(&random)?;
        let cross_entropy = self.score(&fit(&self.bilingual, LossLevel::None)?)?;
        let token_contrastive = self.score(&fit(&self.bilingual, LossLevel::Token)?)?;
        let sentiment_contrastive = self.score(&fit(&self.bilingual, LossLevel::Sentiment)?)?;
        let translation_model = fit(&self.corpus.translated, LossLevel::None)?;
        let translation = self.score(&translation_model)?;

        let mut teachers = Vec::new();
        let mut teacher_scores = Vec::new();
        for (descriptor, data) in &self.teacher_data {
            let model = fit(data, config.teacher_level)?;
            teacher_scores.push(self.score(&model)?);
            teachers.push(Teacher {
                model,
                descriptor: descriptor.clone(),
            });
        }
        let ensemble = TeacherEnsemble::uniform(teachers)?;
        let run = run_distillation(
            &ensemble,
            &self.corpus.unlabeled,
            translation_model,
            dev,
            &with(&config.student, LossLevel::None),
        )?;
        let student = self.score(&run.student)?;
        let outcome = SeedOutcome {
            seed,
            untrained,
            cross_entropy,
            token_contrastive,
            sentiment_contrastive,
            translation,
            teachers: teacher_scores,
            student,
        };
        info!("seed {seed}: {outcome:?}");
        Ok(outcome)
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
