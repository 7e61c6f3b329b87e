//! Dense tensors with define-by-run reverse-mode differentiation, the
//! network primitives used by the market models, and Adam with global-norm
//! clipping.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod pool;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use layers::{additive_attention, linear, lstm_step, uniform, Attention, AttentionVars, Dense, Lstm};
pub use optim::{clip_global_norm, Adam};
pub use pool::{gather, maxpool_with_indices, unpool, PoolIndices, PoolRecord};
pub use tape::{adaptive_ranges, sigmoid, softmax, Tape, Var};
pub use tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got {got}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("pool window must be positive, got {0}")]
    InvalidWindow(usize),
    #[error("{op}: index {index} out of range (bound {bound})")]
    OutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{0}: empty input")]
    Empty(&'static str),
}

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;
