//! Evaluation, prediction CSVs and per-epoch metric CSVs.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::marketdata::csv_io::{read_rows, write_rows};
use crate::marketdata::{Dataset, Partition};
use crate::models::train::Model;
use crate::models::{ModelError, Result};

/// Mean squared error; NaN for empty input.
pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    sum / target.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub split: String,
    pub mse: f64,
}

impl EpochMetric {
    pub fn new(epoch: usize, split: Partition, mse: f64) -> Self {
        Self {
            epoch,
            split: split.as_str().to_string(),
            mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub date: NaiveDate,
    pub stock_id: String,
    pub horizon: usize,
    pub prediction: f64,
    pub label: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    pub count: usize,
    /// Samples excluded because their label is invalid.
    pub invalid: usize,
    pub predictions: Vec<Prediction>,
}

/// MSE of scaled-return predictions over the valid labels of a partition.
pub fn evaluate(model: &Model, ds: &Dataset, partition: Partition, horizon: usize) -> Result<Evaluation> {
    let hi = ds.horizon_index(horizon)?;
    let (samples, invalid) = ds.samples(partition, horizon)?;
    if samples.is_empty() {
        return Err(ModelError::Empty("evaluation"));
    }
    let preds = model.predict(ds, &samples)?;
    let mut predictions = Vec::with_capacity(samples.len());
    let mut sum = 0.0;
    for (s, &p) in samples.iter().zip(&preds) {
        let label = ds.label(s.date, s.stock, hi);
        sum += (p - label.scaled) * (p - label.scaled);
        predictions.push(Prediction {
            date: ds.dates[s.date],
            stock_id: ds.stock_order[s.stock].clone(),
            horizon,
            prediction: p,
            label: label.scaled,
            valid: label.valid,
        });
    }
    Ok(Evaluation {
        mse: sum / samples.len() as f64,
        count: samples.len(),
        invalid,
        predictions,
    })
}

pub fn write_predictions(path: &Path, rows: &[Prediction]) -> Result<()> {
    Ok(write_rows(path, rows)?)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    Ok(read_rows(path)?)
}

pub fn write_metrics(path: &Path, rows: &[EpochMetric]) -> Result<()> {
    Ok(write_rows(path, rows)?)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetric>> {
    Ok(read_rows(path)?)
}
