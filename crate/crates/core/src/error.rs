use std::path::PathBuf;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: header mismatch, missing or misplaced column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: PathBuf,
        timestamp: DateTime<Utc>,
    },

    #[error("{path}: {rejected} of {total} rows rejected (first: {first_reason})")]
    TooManyRejects {
        path: PathBuf,
        rejected: usize,
        total: usize,
        first_reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("missing channel `{0}`")]
    MissingChannel(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("all {0} candidate fits failed")]
    AllFitsFailed(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
