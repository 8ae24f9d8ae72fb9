//! Trains a cross-entropy tagger on the bilingual synthetic corpus, then
//! continues it with and without the token-level contrastive term.
//!
//!     cargo run --release --example contrastive_training

use clxabsa::analysis::evaluate;
use clxabsa::corpus::merge;
use clxabsa::model::Vocab;
use clxabsa::synthetic::{SyntheticConfig, SyntheticCorpus};
use clxabsa::trainer::train;
use clxabsa::{EncoderConfig, LossLevel, Tagger, TrainConfig};

fn main() -> clxabsa::Result<()> {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig::default())?;
    let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
    let data = merge(&[&corpus.source, &corpus.translated], 0)?;
    let base = TrainConfig {
        learning_rate: 3e-3,
        max_steps: 300,
        eval_interval: 50,
        selection_window: 100,
        ..TrainConfig::default()
    };
    let init = Tagger::new(EncoderConfig { window: 5, ..EncoderConfig::default() }, vocab);
    let (warm, _) = train(init, &data, &corpus.source_dev, &TrainConfig { selection_window: 1, ..base.clone() })?;
    println!("warm start   target F1 {:.4}", evaluate(&warm, &corpus.target_test)?.micro_f1);
    for level in [LossLevel::None, LossLevel::Token, LossLevel::Sentiment] {
        let (model, log) = train(warm.clone(), &data, &corpus.source_dev, &TrainConfig { level, ..base.clone() })?;
        let last = log.losses().last().copied().unwrap_or(f64::NAN);
        println!(
            "{:<12} target F1 {:.4}  final loss {last:.4}  selected {:?}",
            format!("{level:?}"),
            evaluate(&model, &corpus.target_test)?.micro_f1,
            log.selected()
        );
    }
    Ok(())
}
