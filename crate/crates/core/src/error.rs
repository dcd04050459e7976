use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("illegal tag transition at {path}:{line}: `{tag}` follows `{previous}`")]
    IllegalTransition { path: PathBuf, line: usize, tag: String, previous: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid template: {0}")]
    Template(String),

    #[error("label `{0}` has no translation in the template set")]
    Untranslated(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("span ({begin},{end}) out of range for a sentence of {len} tokens")]
    SpanOutOfRange { begin: usize, end: usize, len: usize },

    #[error("span length {length} exceeds the maximum of {max}")]
    SpanTooLong { length: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("cannot encode an empty token sequence")]
    EmptyInput,

    #[error("unknown sentence id `{0}`")]
    UnknownSentence(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {actual}")]
    VocabMismatch { expected: String, actual: String },

    #[error("non-finite loss at step {step} (sentence `{sentence}`)")]
    NonFiniteLoss { step: usize, sentence: String },

    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
