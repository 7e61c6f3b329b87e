//! Convolutional encoder-decoder for market images that transfers max-pool
//! indices from encoder to decoder, a PCA baseline, and the reconstruction
//! comparison between them.

pub mod compare;
pub mod net;
pub mod pca;
pub mod train;

use crate::autodiff::{AutodiffError, CheckpointError};
use crate::marketdata::DataError;

pub use compare::{compare, read_comparison, write_comparison, write_embeddings, CompareRow, EMBEDDING_DIMS};
pub use net::{Encoded, SegNet, SegNetConfig};
pub use pca::{pca_fit, Pca};
pub use train::{reconstruction_mse, train_autoencoder, AeTrainConfig, AeOutcome};

#[derive(Debug, thiserror::Error)]
pub enum SegNetError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("image has {m} stocks but the encoder pools by {reduction}")]
    TooFewStocks { m: usize, reduction: usize },
    #[error("image has {got} values, expected {m} x {n}")]
    ImageShape { m: usize, n: usize, got: usize },
    #[error("embedding has {got} values, expected {expected}")]
    EmbeddingLength { expected: usize, got: usize },
    #[error("{got} pool records for {expected} decoder stages")]
    RecordCount { expected: usize, got: usize },
    #[error("pca: k = {k} exceeds the {available} available components")]
    TooManyComponents { k: usize, available: usize },
    #[error("non-finite autoencoder loss at step {step}")]
    NonFinite { step: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Config(String),
}

pub type Result<T, E = SegNetError> = std::result::Result<T, E>;
