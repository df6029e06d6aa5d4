use std::io;
use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("span [{start}, {end}) is invalid for text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("overlapping spans: {0}")]
    Overlap(String),

    #[error("invalid BIO sequence at position {position}: {message}")]
    InvalidBio { position: usize, message: String },

    #[error("invalid label set: {0}")]
    InvalidLabel(String),

    #[error("sentence has no tokens")]
    EmptySentence,

    #[error("segment [{start}, {end}] of label {label} has invalid length (max {max_len})")]
    SegmentLength {
        start: usize,
        end: usize,
        label: String,
        max_len: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("unsupported model version {found} (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
