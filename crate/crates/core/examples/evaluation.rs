//! Exact-match span micro-F1 with per-language breakdown.
//!
//!     cargo run --example evaluation

use clxabsa::analysis::{micro_f1, SentenceSpans};
use clxabsa::{Polarity, SpanAnnotation};

fn spans(id: &str, language: &str, spans: &[(usize, usize, Polarity)]) -> SentenceSpans {
    SentenceSpans {
        id: id.into(),
        language: language.into(),
        spans: spans.iter().map(|&(s, e, p)| SpanAnnotation::new(s, e, p)).collect(),
    }
}

fn main() -> clxabsa::Result<()> {
    use Polarity::*;
    let gold = vec![
        spans("a", "en", &[(1, 2, Pos), (6, 6, Neg)]),
        spans("b", "fr", &[(0, 0, Neu)]),
        spans("c", "fr", &[]),
    ];
    let predicted = vec![
        spans("a", "en", &[(1, 2, Pos), (6, 6, Pos)]), // right span, wrong sentiment
        spans("b", "fr", &[(0, 1, Neu)]),              // boundary off by one
        spans("c", "fr", &[(3, 3, Pos)]),              // spurious
    ];
    let report = micro_f1(&predicted, &gold)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serialize"));
    Ok(())
}
