//! Batch front-end: configuration-driven split, contamination, fitting,
//! threshold calibration and evaluation, plus corpus and scoring utilities.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: synthresh_core::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for invalid input or configuration, 2 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { source, .. } => match source {
                synthresh_core::Error::Schema(_)
                | synthresh_core::Error::Parse { .. }
                | synthresh_core::Error::DimensionMismatch { .. } => 1,
                _ => 2,
            },
            CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a stage name to core errors.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for synthresh_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
