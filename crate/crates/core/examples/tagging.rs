//! Aspect spans to BIOES tags and back.
//!
//!     cargo run --example tagging

use clxabsa::tagging::{decode_tags, encode_spans, is_well_formed, sentiment_projection, LabelTag};
use clxabsa::{AnnotatedSentence, Polarity, SpanAnnotation};

fn main() -> clxabsa::Result<()> {
    let tokens: Vec<String> = "the seafood platter was great but the waiter was rude"
        .split(' ')
        .map(String::from)
        .collect();
    let spans = [
        SpanAnnotation::new(1, 2, Polarity::Pos),
        SpanAnnotation::new(7, 7, Polarity::Neg),
    ];
    let tags = encode_spans(tokens.len(), &spans)?;
    for (tok, tag) in tokens.iter().zip(&tags) {
        println!("{tok:>10}  {:<6} sentiment class {:?}", tag.name(), sentiment_projection(*tag));
    }
    assert_eq!(decode_tags(&tags), spans);

    // Overlapping spans are rejected.
    let bad = encode_spans(tokens.len(), &[SpanAnnotation::new(1, 2, Polarity::Pos), SpanAnnotation::new(2, 3, Polarity::Neg)]);
    println!("overlap: {}", bad.unwrap_err());

    // A dangling I- tag is not well formed; decoding drops it.
    let broken = [LabelTag::O, "I-POS".parse::<LabelTag>().unwrap(), LabelTag::O];
    println!("well formed: {}  decoded: {:?}", is_well_formed(&broken), decode_tags(&broken));

    let sentence = AnnotatedSentence::from_spans("demo-1", "en", tokens, &spans)?;
    println!("{}", serde_json::to_string(&sentence).expect("serialize"));
    Ok(())
}
