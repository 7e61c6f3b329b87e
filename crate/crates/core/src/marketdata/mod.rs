//! Indicator pipeline, market images, normalization, labels, splits,
//! synthetic markets and file formats.

pub mod csv_io;
pub mod cube;
pub mod dataset;
pub mod fill;
pub mod image;
pub mod indicators;
pub mod labels;
pub mod norm;
pub mod series;
pub mod split;
pub mod synth;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

pub use cube::{load_cube, save_cube, MarketCube};
pub use dataset::{Dataset, DatasetConfig, Label, Sample};
pub use fill::{fill_fundamentals, FillMode};
pub use image::{build_image, IndicatorPanel, MarketImage};
pub use indicators::{compute_indicators, IndicatorParams, IndicatorTable, INDICATOR_NAMES};
pub use labels::{compute_label, compute_labels, HorizonLabel, LabelEntry, HORIZONS};
pub use norm::{apply_norm, fit_norm, NormFit, NormStats};
pub use series::{StockSeries, FUNDAMENTAL_NAMES};
pub use split::{split, Partition, Split, SplitSpec};
pub use synth::{synth_market, synth_market_with, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid series {stock_id}: {reason}")]
    InvalidSeries { stock_id: String, reason: String },
    #[error("stock {stock_id} has no fundamentals observations")]
    NoFundamentals { stock_id: String },
    #[error("unknown date {0}")]
    UnknownDate(NaiveDate),
    #[error("stock {stock_id} has no indicator data on {date}")]
    MissingData { stock_id: String, date: NaiveDate },
    #[error("unknown indicator {0:?}")]
    UnknownIndicator(String),
    #[error("stock {stock_id} does not share the universe calendar")]
    CalendarMismatch { stock_id: String },
    #[error("image on {0} has a different row order")]
    RowOrderMismatch(NaiveDate),
    #[error("indicator columns differ between images")]
    ColumnMismatch,
    #[error("empty universe")]
    EmptyUniverse,
    #[error("no training images")]
    EmptyTraining,
    #[error("no day has complete indicator data for every stock")]
    NoAvailableDays,
    #[error("day index {index} needs at least {needed} prior days")]
    InsufficientHistory { index: usize, needed: usize },
    #[error("day index {index} has no close {horizon} days ahead")]
    InsufficientFuture { index: usize, horizon: usize },
    #[error("horizon {0} not present in dataset")]
    UnknownHorizon(usize),
    #[error("split error: {0}")]
    Split(String),
    #[error("cube file corrupt at byte offset {offset}: {reason}")]
    CubeFormat { offset: usize, reason: String },
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::MissingInput(path.to_path_buf())
        } else {
            Self::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub(crate) fn for_stock(self, stock_id: &str) -> Self {
        match self {
            Self::NoFundamentals { .. } => Self::NoFundamentals {
                stock_id: stock_id.to_string(),
            },
            other => other,
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
