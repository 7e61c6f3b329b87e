//! Market-attention return models, market-free baselines, and the
//! training/evaluation loop.

pub mod eval;
pub mod linear;
pub mod net;
pub mod train;

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{AutodiffError, CheckpointError};
use crate::marketdata::DataError;

pub use eval::{evaluate, read_metrics, read_predictions, write_metrics, write_predictions, EpochMetric, Evaluation, Prediction};
pub use linear::{fit_lr, fit_svr, LinearModel, SvrConfig, LR_RIDGE};
pub use net::{NeuralNet, NetConfig};
pub use train::{train, train_on, Model, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Lr,
    Svr,
    Ffnn,
    LstmRnn,
    Ma,
    MaRnn,
}

impl ModelKind {
    /// Benchmark row order: market-free baselines, then market-aware models.
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lr,
        ModelKind::Svr,
        ModelKind::Ffnn,
        ModelKind::LstmRnn,
        ModelKind::Ma,
        ModelKind::MaRnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svr => "svr",
            ModelKind::Ffnn => "ffnn",
            ModelKind::LstmRnn => "lstm-rnn",
            ModelKind::Ma => "ma",
            ModelKind::MaRnn => "ma-rnn",
        }
    }

    /// True for models that see the whole market cube.
    pub fn uses_market(self) -> bool {
        matches!(self, ModelKind::Ma | ModelKind::MaRnn)
    }

    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::Lr | ModelKind::Svr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss in epoch {epoch}, batch {batch} ({detail})")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("cube has {got} stocks but the model was built for {expected}")]
    StockCount { expected: usize, got: usize },
    #[error("stock order differs from the model's embedding table")]
    StockOrder,
    #[error("stock index {index} out of range for {m} stocks")]
    StockIndex { index: usize, m: usize },
    #[error("history has {got} values, expected {expected}")]
    HistoryLength { expected: usize, got: usize },
    #[error("{0}")]
    Config(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
