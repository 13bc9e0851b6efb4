use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent grids, geometries or run settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A metric is not defined for the given inputs (e.g. constant ground truth).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("index {index} out of range for part of {len} samples")]
    Index { index: usize, len: usize },

    /// Failure while turning one source slice into a ground truth.
    #[error("slice {slice}: {source}")]
    Ingest {
        slice: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Hdf5 {
        path: PathBuf,
        #[source]
        source: hdf5::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn hdf5(path: impl Into<PathBuf>, source: hdf5::Error) -> Self {
        Error::Hdf5 { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    pub fn ingest(slice: impl Into<String>, source: Error) -> Self {
        Error::Ingest { slice: slice.into(), source: Box::new(source) }
    }

    /// Process exit code: 2 for filesystem/storage failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Hdf5 { .. } => 2,
            Error::Ingest { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
