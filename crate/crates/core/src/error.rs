use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("training data is empty after normalization")]
    TrainingDataEmpty,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },

    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    #[error("shard token id {id} does not fit model vocabulary of size {vocab_size}")]
    VocabMismatch { id: u32, vocab_size: usize },

    #[error("invalid template: {0}")]
    TemplateInvalid(String),

    #[error("no template for {0}")]
    TemplateMissing(String),

    #[error("invalid translation pair: {0}")]
    PairInvalid(String),

    #[error("unknown label {label:?} for task {task} in language {language}")]
    LabelUnknown {
        task: String,
        language: String,
        label: String,
    },

    #[error("context of {needed} tokens exceeds maximum sequence length {max}")]
    ContextTooLong { needed: usize, max: usize },

    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, bad config values, missing templates.
    User,
    /// Malformed or inconsistent input data.
    Data,
    /// Non-finite losses or updates.
    Numerical,
}

impl Error {
    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ConfigInvalid(_) | Error::TemplateMissing(_) | Error::TemplateInvalid(_) => ErrorClass::User,
            Error::NumericalDivergence(_) => ErrorClass::Numerical,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorClass::User,
            _ => ErrorClass::Data,
        }
    }
}
