use std::path::PathBuf;

use thiserror::Error;

use crate::detectors::OneClassSvm;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: model expects {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("one-class SVM did not converge after {iterations} iterations (KKT gap {gap:.3e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        best: Box<OneClassSvm>,
    },

    #[error("ensemble member {index} ({label}): {source}")]
    Member {
        index: usize,
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("ensemble is not calibrated: score the threshold split with `calibrate` first")]
    NotCalibrated,

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
