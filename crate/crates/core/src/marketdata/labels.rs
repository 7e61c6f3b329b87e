//! Forward-return labels scaled by trailing volatility.

use chrono::NaiveDate;

use crate::marketdata::indicators::sample_std;
use crate::marketdata::series::StockSeries;
use crate::marketdata::{DataError, Result};

pub const HORIZONS: [usize; 4] = [1, 5, 15, 30];
pub const SIGMA_WINDOW: usize = 10;
/// Trailing volatility below this marks the label invalid.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonLabel {
    pub horizon: usize,
    /// Fractional return `close[d + h] / close[d] - 1`.
    pub raw: f64,
    /// `raw / sigma`, or 0 when invalid.
    pub scaled: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelEntry {
    pub date: NaiveDate,
    pub labels: Vec<HorizonLabel>,
}

/// Sample std of the daily returns of days `d - window ..= d - 1`.
pub fn trailing_sigma(close: &[f64], d: usize, window: usize) -> Result<f64> {
    if d < window + 1 || d >= close.len() {
        return Err(DataError::InsufficientHistory { index: d, needed: window + 1 });
    }
    let rets: Vec<f64> = (d - window..d).map(|k| close[k] / close[k - 1] - 1.0).collect();
    Ok(sample_std(&rets))
}

pub fn compute_label(close: &[f64], d: usize, horizon: usize, window: usize) -> Result<HorizonLabel> {
    if d + horizon >= close.len() {
        return Err(DataError::InsufficientFuture { index: d, horizon });
    }
    let sigma = trailing_sigma(close, d, window)?;
    let raw = close[d + horizon] / close[d] - 1.0;
    let (scaled, valid) = scale_return(raw, sigma);
    Ok(HorizonLabel {
        horizon,
        raw,
        scaled,
        valid,
    })
}

/// `(raw / sigma, true)`, or `(0, false)` when sigma is under the floor.
pub fn scale_return(raw: f64, sigma: f64) -> (f64, bool) {
    if sigma >= SIGMA_FLOOR {
        (raw / sigma, true)
    } else {
        (0.0, false)
    }
}

pub fn compute_labels(series: &StockSeries, d: usize, horizons: &[usize], window: usize) -> Result<LabelEntry> {
    let labels = horizons
        .iter()
        .map(|&h| compute_label(&series.close, d, h, window))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelEntry {
        date: series.dates[d],
        labels,
    })
}
