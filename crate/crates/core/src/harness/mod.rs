//! Configuration, commands and reports for running experiments end to end.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use crate::autodiff::CheckpointError;
use crate::marketdata::DataError;
use crate::models::ModelError;
use crate::segnet::SegNetError;

pub use commands::{run, Command, RunReport};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error in {key}: {message}")]
    Config { key: String, message: String },
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("numerical failure: {0}")]
    NonFinite(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Data(DataError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    SegNet(SegNetError),
    #[error(transparent)]
    Checkpoint(CheckpointError),
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingInput(p) => Self::MissingInput(p),
            other => Self::Data(other),
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Data(d) => d.into(),
            e @ ModelError::NonFinite { .. } => Self::NonFinite(e.to_string()),
            other => Self::Model(other),
        }
    }
}

impl From<SegNetError> for HarnessError {
    fn from(e: SegNetError) -> Self {
        match e {
            SegNetError::Data(d) => d.into(),
            e @ SegNetError::NonFinite { .. } => Self::NonFinite(e.to_string()),
            other => Self::SegNet(other),
        }
    }
}

impl From<CheckpointError> for HarnessError {
    fn from(e: CheckpointError) -> Self {
        Self::Checkpoint(e)
    }
}

impl HarnessError {
    /// Process exit code: 1 configuration (and other) errors, 2 missing
    /// input, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::MissingInput(_) => 2,
            Self::NonFinite(_) => 3,
            _ => 1,
        }
    }
}

/// Worker-thread cap from `MKTCUBE_THREADS` (default 1).
pub fn thread_cap(value: Option<&str>) -> Result<usize, HarnessError> {
    match value {
        None => Ok(1),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Config {
                key: "MKTCUBE_THREADS".into(),
                message: format!("expected a positive integer, got {v:?}"),
            }),
        },
    }
}
