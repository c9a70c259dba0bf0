use std::io;

use thiserror::Error;

use crate::corpus::CharSpan;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// A line of an input file could not be parsed.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// A record parsed but violates one of its invariants.
    #[error("record {id}: field `{field}`: {message}")]
    InvalidRecord {
        id: String,
        field: &'static str,
        message: String,
    },

    #[error("overlapping spans {first} and {second}")]
    OverlappingSpans { first: CharSpan, second: CharSpan },

    #[error("invalid label sequence at token {position}: {message}")]
    InvalidLabels { position: usize, message: String },

    #[error("sequence {index}: length mismatch ({expected} vs {found})")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch{}: expected {expected}, found {found}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Dimension {
        expected: usize,
        found: usize,
        line: Option<usize>,
    },

    #[error("non-finite value in sequence {index}")]
    NonFinite { index: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown document id `{0}`")]
    UnknownDocument(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(id: impl Into<String>, field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidRecord {
            id: id.into(),
            field,
            message: message.into(),
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.to_string(),
        }
    }

    /// True when the error originates from the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
