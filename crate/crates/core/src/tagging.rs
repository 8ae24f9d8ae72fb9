//! Label space for aspect sentiment tagging and the conversions between span
//! annotations and per-token BIOES tag sequences.
//!
//! Every aspect tag pairs a boundary marker (`B`, `I`, `E`, `S`) with a
//! polarity (`POS`, `NEU`, `NEG`); the remaining tag is `O`. The 13 tags have
//! fixed indices: `O = 0`, then boundary-major `B-POS, B-NEU, B-NEG, I-POS, …,
//! S-NEG`. Probability vectors from separately trained models are compared
//! entry by entry, so this order must never change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_TAGS: usize = 13;
pub const NUM_SENTIMENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Boundary {
    B,
    I,
    E,
    S,
}

impl Boundary {
    pub const ALL: [Boundary; 4] = [Boundary::B, Boundary::I, Boundary::E, Boundary::S];

    fn as_str(self) -> &'static str {
        match self {
            Boundary::B => "B",
            Boundary::I => "I",
            Boundary::E => "E",
            Boundary::S => "S",
        }
    }
}

/// Polarity of an aspect term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarity {
    Pos,
    Neu,
    Neg,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neu, Polarity::Neg];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pos => "POS",
            Polarity::Neu => "NEU",
            Polarity::Neg => "NEG",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the 13 token labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelTag {
    O,
    Aspect(Boundary, Polarity),
}

impl LabelTag {
    /// All tags in index order.
    pub fn all() -> [LabelTag; NUM_TAGS] {
        let mut out = [LabelTag::O; NUM_TAGS];
        for (i, tag) in out.iter_mut().enumerate().skip(1) {
            let b = Boundary::ALL[(i - 1) / 3];
            let p = Polarity::ALL[(i - 1) % 3];
            *tag = LabelTag::Aspect(b, p);
        }
        out
    }

    pub fn index(self) -> usize {
        match self {
            LabelTag::O => 0,
            LabelTag::Aspect(b, p) => 1 + (b as usize) * 3 + p.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<LabelTag> {
        (index < NUM_TAGS).then(|| LabelTag::all()[index])
    }

    pub fn boundary(self) -> Option<Boundary> {
        match self {
            LabelTag::O => None,
            LabelTag::Aspect(b, _) => Some(b),
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            LabelTag::O => None,
            LabelTag::Aspect(_, p) => Some(p),
        }
    }

    pub fn name(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LabelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelTag::O => f.write_str("O"),
            LabelTag::Aspect(b, p) => write!(f, "{}-{}", b.as_str(), p.as_str()),
        }
    }
}

impl FromStr for LabelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(LabelTag::O);
        }
        let (b, p) = s.split_once('-').ok_or_else(|| Error::UnknownTag(s.to_string()))?;
        let boundary = match b {
            "B" => Boundary::B,
            "I" => Boundary::I,
            "E" => Boundary::E,
            "S" => Boundary::S,
            _ => return Err(Error::UnknownTag(s.to_string())),
        };
        let polarity = match p {
            "POS" => Polarity::Pos,
            "NEU" => Polarity::Neu,
            "NEG" => Polarity::Neg,
            _ => return Err(Error::UnknownTag(s.to_string())),
        };
        Ok(LabelTag::Aspect(boundary, polarity))
    }
}

impl Serialize for LabelTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tag names in index order; this is the tag-index map stored with models.
pub fn tag_names() -> Vec<String> {
    LabelTag::all().iter().map(|t| t.to_string()).collect()
}

/// SHA-256 over the newline-joined tag names in index order.
pub fn tag_map_hash() -> String {
    hash_tag_names(&tag_names())
}

pub fn hash_tag_names(names: &[String]) -> String {
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Sentiment class of a token: the polarity of its aspect, or `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentimentClass {
    Pos,
    Neu,
    Neg,
    O,
}

impl SentimentClass {
    pub const ALL: [SentimentClass; NUM_SENTIMENTS] = [
        SentimentClass::Pos,
        SentimentClass::Neu,
        SentimentClass::Neg,
        SentimentClass::O,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn sentiment_projection(tag: LabelTag) -> SentimentClass {
    match tag {
        LabelTag::O => SentimentClass::O,
        LabelTag::Aspect(_, Polarity::Pos) => SentimentClass::Pos,
        LabelTag::Aspect(_, Polarity::Neu) => SentimentClass::Neu,
        LabelTag::Aspect(_, Polarity::Neg) => SentimentClass::Neg,
    }
}

/// An aspect term: inclusive token range plus polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    pub end: usize,
    pub sentiment: Polarity,
}

impl SpanAnnotation {
    pub fn new(start: usize, end: usize, sentiment: Polarity) -> Self {
        SpanAnnotation {
            start,
            end,
            sentiment,
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Checks range and pairwise disjointness; returns the spans sorted by start.
pub fn validate_spans(length: usize, spans: &[SpanAnnotation]) -> Result<Vec<SpanAnnotation>> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for span in &sorted {
        if span.start > span.end {
            return Err(Error::InvalidSpan {
                span: *span,
                length,
                reason: "start after end",
            });
        }
        if span.end >= length {
            return Err(Error::InvalidSpan {
                span: *span,
                length,
                reason: "out of range",
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(Error::InvalidSpan {
                span: pair[1],
                length,
                reason: "overlaps a preceding span",
            });
        }
    }
    Ok(sorted)
}

pub fn encode_spans(length: usize, spans: &[SpanAnnotation]) -> Result<Vec<LabelTag>> {
    let spans = validate_spans(length, spans)?;
    let mut tags = vec![LabelTag::O; length];
    for span in spans {
        let p = span.sentiment;
        if span.start == span.end {
            tags[span.start] = LabelTag::Aspect(Boundary::S, p);
            continue;
        }
        tags[span.start] = LabelTag::Aspect(Boundary::B, p);
        for tag in &mut tags[span.start + 1..span.end] {
            *tag = LabelTag::Aspect(Boundary::I, p);
        }
        tags[span.end] = LabelTag::Aspect(Boundary::E, p);
    }
    Ok(tags)
}

/// Recovers spans from a tag sequence. Ill-formed fragments (an `I`/`E`
/// without an open `B`, a polarity switch inside a span, a `B` never closed
/// by `E`) are dropped whole.
pub fn decode_tags(tags: &[LabelTag]) -> Vec<SpanAnnotation> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, Polarity)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            LabelTag::O => open = None,
            LabelTag::Aspect(Boundary::S, p) => {
                open = None;
                spans.push(SpanAnnotation::new(i, i, p));
            }
            LabelTag::Aspect(Boundary::B, p) => open = Some((i, p)),
            LabelTag::Aspect(Boundary::I, p) => {
                if !matches!(open, Some((_, q)) if q == p) {
                    open = None;
                }
            }
            LabelTag::Aspect(Boundary::E, p) => {
                if let Some((start, q)) = open {
                    if q == p {
                        spans.push(SpanAnnotation::new(start, i, p));
                    }
                }
                open = None;
            }
        }
    }
    spans
}

/// True when every tag belongs to a span recovered by [`decode_tags`].
pub fn is_well_formed(tags: &[LabelTag]) -> bool {
    let covered: usize = decode_tags(tags).iter().map(|s| s.len()).sum();
    let non_o = tags.iter().filter(|t| **t != LabelTag::O).count();
    covered == non_o
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(names: &[&str]) -> Vec<LabelTag> {
        names.iter().map(|n| n.parse().unwrap()).collect()
    }

    #[test]
    fn index_layout() {
        let all = LabelTag::all();
        assert_eq!(all[0], LabelTag::O);
        assert_eq!(all[1].to_string(), "B-POS");
        assert_eq!(all[3].to_string(), "B-NEG");
        assert_eq!(all[4].to_string(), "I-POS");
        assert_eq!(all[12].to_string(), "S-NEG");
        for (i, t) in all.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(LabelTag::from_index(i), Some(*t));
            assert_eq!(t.to_string().parse::<LabelTag>().unwrap(), *t);
            assert_eq!(t.boundary().is_none(), t.polarity().is_none());
        }
        assert_eq!(LabelTag::from_index(13), None);
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), NUM_TAGS);
    }

    #[test]
    fn parse_rejects_unknown() {
        assert!("B-XYZ".parse::<LabelTag>().is_err());
        assert!("X-POS".parse::<LabelTag>().is_err());
        assert!("b-pos".parse::<LabelTag>().is_err());
        assert!("".parse::<LabelTag>().is_err());
    }

    #[test]
    fn encode_examples() {
        let single = encode_spans(3, &[SpanAnnotation::new(1, 1, Polarity::Pos)]).unwrap();
        assert_eq!(single, tags(&["O", "S-POS", "O"]));
        assert_eq!(encode_spans(4, &[]).unwrap(), vec![LabelTag::O; 4]);
        let multi = encode_spans(5, &[SpanAnnotation::new(1, 3, Polarity::Neg)]).unwrap();
        assert_eq!(multi, tags(&["O", "B-NEG", "I-NEG", "E-NEG", "O"]));
    }

    #[test]
    fn encode_rejects_bad_spans() {
        let overlap = [
            SpanAnnotation::new(0, 2, Polarity::Pos),
            SpanAnnotation::new(2, 3, Polarity::Neg),
        ];
        match encode_spans(5, &overlap) {
            Err(Error::InvalidSpan { span, .. }) => assert_eq!(span, overlap[1]),
            other => panic!("expected overlap error, got {other:?}"),
        }
        assert!(encode_spans(3, &[SpanAnnotation::new(2, 3, Polarity::Pos)]).is_err());
        assert!(encode_spans(3, &[SpanAnnotation::new(2, 1, Polarity::Pos)]).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_tags(&tags(&["O", "S-POS", "O"])),
            vec![SpanAnnotation::new(1, 1, Polarity::Pos)]
        );
        assert!(decode_tags(&tags(&["I-POS", "O", "O"])).is_empty());
        assert_eq!(
            decode_tags(&tags(&["O", "B-NEG", "I-NEG", "E-NEG", "O"])),
            vec![SpanAnnotation::new(1, 3, Polarity::Neg)]
        );
    }

    #[test]
    fn decode_drops_ill_formed_fragments() {
        // polarity switch inside a span
        assert!(decode_tags(&tags(&["B-POS", "I-NEG", "E-NEG"])).is_empty());
        assert!(decode_tags(&tags(&["B-POS", "E-NEU"])).is_empty());
        // unterminated B, dangling E
        assert!(decode_tags(&tags(&["B-POS", "O", "E-POS"])).is_empty());
        assert!(decode_tags(&tags(&["B-POS", "I-POS"])).is_empty());
        // a B restarts the span
        assert_eq!(
            decode_tags(&tags(&["B-POS", "B-NEU", "E-NEU"])),
            vec![SpanAnnotation::new(1, 2, Polarity::Neu)]
        );
        // S inside an open span closes it
        assert_eq!(
            decode_tags(&tags(&["B-POS", "S-POS", "E-POS"])),
            vec![SpanAnnotation::new(1, 1, Polarity::Pos)]
        );
        assert!(!is_well_formed(&tags(&["B-POS", "S-POS", "E-POS"])));
        assert!(is_well_formed(&tags(&["O", "B-NEG", "E-NEG", "S-POS"])));
    }

    #[test]
    fn projection() {
        assert_eq!(sentiment_projection("B-POS".parse().unwrap()), SentimentClass::Pos);
        assert_eq!(sentiment_projection(LabelTag::O), SentimentClass::O);
        assert_eq!(sentiment_projection("E-NEU".parse().unwrap()), SentimentClass::Neu);
        let image: std::collections::HashSet<_> =
            LabelTag::all().iter().map(|t| sentiment_projection(*t)).collect();
        assert_eq!(image.len(), NUM_SENTIMENTS);
        for (i, s) in SentimentClass::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
        }
    }

    #[test]
    fn tag_strings_serialize() {
        let t: LabelTag = "S-NEG".parse().unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), "\"S-NEG\"");
        let back: LabelTag = serde_json::from_str("\"I-NEU\"").unwrap();
        assert_eq!(back.to_string(), "I-NEU");
        assert_eq!(tag_map_hash(), hash_tag_names(&tag_names()));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn spans_strategy() -> impl Strategy<Value = (usize, Vec<SpanAnnotation>)> {
            (1usize..=20).prop_flat_map(|len| {
                let cuts = proptest::collection::vec((0..len, 1usize..=4, 0usize..3), 0..=3);
                (Just(len), cuts).prop_map(|(len, raw)| {
                    let mut spans: Vec<SpanAnnotation> = Vec::new();
                    for (start, width, p) in raw {
                        let end = (start + width - 1).min(len - 1);
                        let cand = SpanAnnotation::new(start, end, Polarity::ALL[p]);
                        if spans.iter().all(|s| cand.end < s.start || cand.start > s.end) {
                            spans.push(cand);
                        }
                    }
                    (len, spans)
                })
            })
        }

        proptest! {
            #[test]
            fn round_trip((len, spans) in spans_strategy()) {
                let tags = encode_spans(len, &spans).unwrap();
                prop_assert_eq!(tags.len(), len);
                let mut expected = spans.clone();
                expected.sort();
                prop_assert_eq!(decode_tags(&tags), expected);
                prop_assert!(is_well_formed(&tags));
            }

            #[test]
            fn projection_constant_within_spans((len, spans) in spans_strategy()) {
                let tags = encode_spans(len, &spans).unwrap();
                for span in decode_tags(&tags) {
                    let first = sentiment_projection(tags[span.start]);
                    for t in &tags[span.start..=span.end] {
                        prop_assert_eq!(sentiment_projection(*t), first);
                    }
                }
            }

            #[test]
            fn decode_total_and_disjoint(raw in proptest::collection::vec(0usize..NUM_TAGS, 0..30)) {
                let tags: Vec<LabelTag> = raw.iter().map(|i| LabelTag::from_index(*i).unwrap()).collect();
                let spans = decode_tags(&tags);
                prop_assert!(validate_spans(tags.len(), &spans).is_ok());
            }
        }
    }
}
