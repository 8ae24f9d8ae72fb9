use std::path::PathBuf;

use thiserror::Error;

use crate::tagging::SpanAnnotation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("span {span:?} is invalid for a sentence of length {length}: {reason}")]
    InvalidSpan {
        span: SpanAnnotation,
        length: usize,
        reason: &'static str,
    },

    #[error("unknown tag {0:?}")]
    UnknownTag(String),

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("incompatible models: {0}")]
    Incompatible(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),

    #[error("sentence id mismatch: {0}")]
    IdMismatch(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
