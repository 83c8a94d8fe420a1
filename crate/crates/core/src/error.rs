use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown frame {0:?}")]
    UnknownFrame(String),

    #[error("{path}:{line}: inconsistent dimension: expected {expected} values, found {found}")]
    InconsistentDimension {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("empty token list")]
    EmptyTokens,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("ontology has no frames")]
    EmptyOntology,

    #[error("index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training aborted at instance {instance}: {reason}")]
    TrainingAborted { instance: usize, reason: String },

    #[error("span [{start}, {end}) out of range for {len} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("invalid argument spans: {0}")]
    InvalidSpans(String),

    #[error("frame name must not be empty")]
    EmptyFrame,

    #[error("backend error on request {request_id}: {message}")]
    Backend { request_id: u64, message: String },

    #[error("backend timed out on request {request_id} after {seconds} s")]
    BackendTimeout { request_id: u64, seconds: u64 },

    #[error("instance {0} has no gold frame")]
    MissingGold(usize),

    #[error("misaligned inputs: {gold} gold entries vs {predicted} predicted")]
    Misaligned { gold: usize, predicted: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 runtime, 3 backend protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::UnknownFrame(_)
            | Error::InconsistentDimension { .. }
            | Error::EmptyFile(_)
            | Error::EmptyOntology
            | Error::MissingGold(_)
            | Error::SpanOutOfRange { .. }
            | Error::InvalidSpans(_) => 1,
            Error::Backend { .. } | Error::BackendTimeout { .. } => 3,
            _ => 2,
        }
    }
}
