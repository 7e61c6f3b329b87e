use chrono::NaiveDate;

use crate::marketdata::image::MarketImage;
use crate::marketdata::{DataError, Result};

/// Per-indicator min/max fitted on training images.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Result of [`fit_norm`] including which dates were read and which
/// columns were constant.
#[derive(Debug, Clone, PartialEq)]
pub struct NormFit {
    pub stats: NormStats,
    pub dates_read: Vec<NaiveDate>,
    pub degenerate: Vec<String>,
}

pub fn fit_norm<'a>(images: impl IntoIterator<Item = &'a MarketImage>) -> Result<NormFit> {
    let mut iter = images.into_iter().peekable();
    let first = iter.peek().ok_or(DataError::EmptyTraining)?;
    let names = first.indicator_names.clone();
    let n = names.len();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut dates_read = Vec::new();
    for img in iter {
        if img.indicator_names != names {
            return Err(DataError::ColumnMismatch);
        }
        dates_read.push(img.date);
        for row in img.values.chunks(n) {
            for j in 0..n {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
    }
    let degenerate: Vec<String> = (0..n)
        .filter(|&j| max[j] == min[j])
        .map(|j| names[j].clone())
        .collect();
    for d in &degenerate {
        log::warn!("indicator {d} is constant over the training period; normalized to 0");
    }
    Ok(NormFit {
        stats: NormStats { names, min, max },
        dates_read,
        degenerate,
    })
}

impl NormStats {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Min-max scales row-major `values` with `n` columns; no clamping.
    pub fn normalize(&self, values: &mut [f64]) {
        let n = self.n();
        for row in values.chunks_mut(n) {
            for j in 0..n {
                let span = self.max[j] - self.min[j];
                row[j] = if span > 0.0 { (row[j] - self.min[j]) / span } else { 0.0 };
            }
        }
    }
}

pub fn apply_norm(image: &MarketImage, stats: &NormStats) -> Result<MarketImage> {
    if image.indicator_names != stats.names {
        return Err(DataError::ColumnMismatch);
    }
    let mut out = image.clone();
    stats.normalize(&mut out.values);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(day: u32, col: &[f64]) -> MarketImage {
        MarketImage {
            date: NaiveDate::from_ymd_opt(2003, 1, day).unwrap(),
            stock_order: (0..col.len()).map(|i| format!("S{i}")).collect(),
            indicator_names: vec!["x".into()],
            values: col.to_vec(),
        }
    }

    #[test]
    fn scales_endpoints_and_midpoint() {
        let train = img(1, &[2.0, 4.0, 6.0]);
        let fit = fit_norm([&train]).unwrap();
        assert_eq!(apply_norm(&train, &fit.stats).unwrap().values, vec![0.0, 0.5, 1.0]);
        assert_eq!(fit.dates_read, vec![train.date]);
    }

    #[test]
    fn out_of_range_is_not_clamped() {
        let fit = fit_norm([&img(1, &[2.0, 6.0])]).unwrap();
        assert_eq!(apply_norm(&img(2, &[8.0]), &fit.stats).unwrap().values, vec![1.5]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let fit = fit_norm([&img(1, &[3.0, 3.0])]).unwrap();
        assert_eq!(fit.degenerate, vec!["x".to_string()]);
        assert_eq!(apply_norm(&img(2, &[5.0]), &fit.stats).unwrap().values, vec![0.0]);
    }

    #[test]
    fn empty_training_rejected() {
        assert!(matches!(fit_norm(std::iter::empty()), Err(DataError::EmptyTraining)));
    }
}
