use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed JSON: {message}")]
    MalformedJson {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: missing field `{field}`")]
    MissingField {
        path: PathBuf,
        line: usize,
        field: String,
    },

    #[error("{path}:{line}: invalid record: {message}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("corpus contains no labeled documents")]
    NoLabeledDocuments,

    #[error("cannot build an index from an empty document stream")]
    EmptyIndex,

    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },

    #[error("document slot {slot} out of range (index holds {num_docs} documents)")]
    SlotOutOfRange { slot: usize, num_docs: usize },

    #[error("document `{0}` is not in the index")]
    UnknownDocument(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("index format version mismatch: {0}")]
    IndexVersion(String),

    #[error("index checksum mismatch (file truncated or corrupted)")]
    IndexChecksum,

    #[error("index file is corrupted: {0}")]
    IndexCorrupt(String),

    #[error("document `{id}` has {actual} tokens but the index recorded {expected}; corpus or preprocessing differs from the indexed one")]
    LengthMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("invalid corruption config: {0}")]
    InvalidConfig(String),

    #[error("document `{id}` has no salient spans")]
    NoSpans { id: String },

    #[error("document `{id}` has an empty title")]
    EmptyTitle { id: String },

    #[error("document `{id}` has an empty body")]
    EmptyBody { id: String },

    #[error("spans file has no record for document `{0}`")]
    MissingSpans(String),

    #[error("gold keyphrase set is empty")]
    EmptyGold,

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::InvalidParams { .. }
            | Error::InvalidThresholds(_)
            | Error::InvalidConfig(_)
            | Error::Usage(_) => ErrorCategory::Usage,
            _ => ErrorCategory::Data,
        }
    }
}
