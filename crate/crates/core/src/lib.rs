//! Cross-lingual aspect-based sentiment analysis as BIOES token tagging.
//!
//! A sentence is tagged with one of 13 labels per token (`O` plus
//! `{B,I,E,S} × {POS,NEU,NEG}`). Training combines cross-entropy with a
//! supervised contrastive loss computed on predicted probability vectors,
//! either grouped by full tag or by sentiment class. Code-switched corpora
//! swap aligned aspect phrases between a source sentence and its
//! translation, and a student model can be distilled from a weighted fusion
//! of several teachers on unlabeled target-language text.
//!
//! Start with the runnable programs in `examples/`.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod distillation;
pub mod error;
pub mod experiment;
pub mod model;
pub mod objectives;
pub mod synthetic;
pub mod tagging;
pub mod trainer;

pub use corpus::{AnnotatedSentence, Dataset, DatasetRole};
pub use error::{Error, Result};
pub use model::{Checkpoint, EncoderConfig, Tagger};
pub use objectives::{ContrastiveConfig, ContrastiveLevel};
pub use tagging::{LabelTag, Polarity, SpanAnnotation};
pub use trainer::{LossLevel, TrainConfig};
