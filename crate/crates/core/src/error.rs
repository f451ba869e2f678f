use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: row {row}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty cluster")]
    EmptyCluster,

    #[error("degenerate classifier: weight row {row} is all zeros")]
    DegenerateClassifier { row: usize },

    #[error("degenerate cluster: {count} samples with zero radius")]
    DegenerateCluster { count: usize },

    #[error("renewed domain would be empty")]
    EmptyDomain,

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonFinite(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
