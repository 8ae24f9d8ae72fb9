//! Fuses three teachers into soft labels on unlabeled target text and
//! distills a student from them.
//!
//!     cargo run --release --example distillation

use clxabsa::analysis::evaluate;
use clxabsa::corpus::merge;
use clxabsa::distillation::{distill_loss, run_distillation, Teacher, TeacherEnsemble};
use clxabsa::model::Vocab;
use clxabsa::synthetic::{SyntheticConfig, SyntheticCorpus};
use clxabsa::trainer::train;
use clxabsa::{EncoderConfig, Tagger, TrainConfig};

fn main() -> clxabsa::Result<()> {
    let corpus = SyntheticCorpus::generate(&SyntheticConfig::default())?;
    let vocab = Vocab::from_sentences(corpus.vocabulary_sources());
    let config = TrainConfig {
        learning_rate: 3e-3,
        max_steps: 300,
        eval_interval: 50,
        selection_window: 100,
        ..TrainConfig::default()
    };
    let dev = &corpus.source_dev;
    let mut teachers = Vec::new();
    for (i, (name, extra)) in [("D_T ∪ D_S", &corpus.source), ("D_T ∪ D_ST", &corpus.code_switched_st), ("D_T ∪ D_TS", &corpus.code_switched_ts)]
        .into_iter()
        .enumerate()
    {
        let init = Tagger::new(EncoderConfig { init_seed: i as u64, ..EncoderConfig::default() }, vocab.clone());
        let (model, _) = train(init, &merge(&[&corpus.translated, extra], 0)?, dev, &config)?;
        println!("teacher {name:<11} target F1 {:.4}", evaluate(&model, &corpus.target_test)?.micro_f1);
        teachers.push(Teacher { model, descriptor: name.into() });
    }
    let (translation, _) = train(Tagger::new(EncoderConfig::default(), vocab), &corpus.translated, dev, &config)?;
    println!("translation         target F1 {:.4}", evaluate(&translation, &corpus.target_test)?.micro_f1);

    let ensemble = TeacherEnsemble::uniform(teachers)?;
    let student_config = TrainConfig { learning_rate: 1e-3, max_steps: 200, ..config };
    let run = run_distillation(&ensemble, &corpus.unlabeled, translation, dev, &student_config)?;
    println!("student             target F1 {:.4}", evaluate(&run.student, &corpus.target_test)?.micro_f1);

    let first = &run.soft_labels[0];
    let student_probs = run.student.probabilities(&corpus.unlabeled.sentences[0].tokens)?;
    let mask = vec![vec![true; first.probs.len()]];
    println!(
        "sentence {}: distillation loss {:.6}",
        first.id,
        distill_loss(&[first.probs.clone()], &[student_probs], &mask)?
    );
    Ok(())
}
