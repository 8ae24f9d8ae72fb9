//! Builds code-switched sentences from a parallel pair by swapping the
//! aligned aspect terms between languages.
//!
//!     cargo run --example code_switch

use clxabsa::corpus::{build_code_switched, pair_up, AlignmentRecord, SwitchDirection};
use clxabsa::{AnnotatedSentence, Dataset, DatasetRole, Polarity, SpanAnnotation};

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(String::from).collect()
}

fn main() -> clxabsa::Result<()> {
    let en = AnnotatedSentence::from_spans(
        "en-1",
        "en",
        words("the wine list was excellent but the dessert was bland"),
        &[SpanAnnotation::new(1, 2, Polarity::Pos), SpanAnnotation::new(7, 7, Polarity::Neg)],
    )?;
    let fr = AnnotatedSentence::from_spans(
        "fr-1",
        "fr",
        words("la carte des vins était excellente mais le dessert était fade"),
        &[SpanAnnotation::new(1, 3, Polarity::Pos), SpanAnnotation::new(8, 8, Polarity::Neg)],
    )?;
    // A pair whose aspect counts disagree is skipped, not written.
    let en2 = AnnotatedSentence::from_spans("en-2", "en", words("good soup"), &[SpanAnnotation::new(1, 1, Polarity::Pos)])?;
    let fr2 = AnnotatedSentence::from_spans("fr-2", "fr", words("bonne soupe"), &[])?;

    let source = Dataset::new(vec![en, en2], DatasetRole::Source)?;
    let target = Dataset::new(vec![fr, fr2], DatasetRole::Translated)?;
    let alignments = vec![
        AlignmentRecord { source_id: "en-1".into(), target_id: "fr-1".into(), alignments: vec![[0, 0], [1, 1]] },
        AlignmentRecord { source_id: "en-2".into(), target_id: "fr-2".into(), alignments: vec![] },
    ];
    let pairs = pair_up(&source, &target, &alignments)?;
    for direction in [SwitchDirection::SourceToTarget, SwitchDirection::TargetToSource] {
        let (ds, report) = build_code_switched(&pairs, direction)?;
        for s in ds.iter() {
            let tags: Vec<String> = s.tags.as_ref().unwrap().iter().map(|t| t.name()).collect();
            println!("[{}] {}\n      {}", direction.suffix(), s.tokens.join(" "), tags.join(" "));
        }
        for skip in &report.skipped {
            println!("[{}] skipped {} / {}: {}", direction.suffix(), skip.source_id, skip.target_id, skip.reason);
        }
    }
    Ok(())
}
