//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },

    #[error("vocabulary is empty")]
    EmptyVocabulary,

    #[error("invalid technique name {name:?}: {reason}")]
    InvalidTechniqueName { name: String, reason: String },

    #[error("duplicate technique name {0:?}")]
    DuplicateTechniqueName(String),

    #[error("unknown technique name {0:?}")]
    UnknownTechnique(String),

    #[error("duplicate paragraph key {0}")]
    DuplicateKey(String),

    #[error("key {0} not present in the corpus")]
    UnknownKey(String),

    #[error("invalid language code {0:?}")]
    InvalidLanguage(String),

    #[error("holdout language {0:?} is not present in the corpus")]
    HoldoutNotInCorpus(String),

    #[error("holdout covers every corpus language; nothing left to train on")]
    HoldoutCoversCorpus,

    #[error("corpus has no gold labels")]
    MissingGold,

    #[error("cannot train on an empty corpus")]
    EmptyCorpus,

    #[error("training loss became non-finite at epoch {epoch} (diverging learning rate?)")]
    NonFiniteLoss { epoch: u32 },

    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),

    #[error("probability table is empty")]
    EmptyTable,

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("unsupported model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn malformed(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
