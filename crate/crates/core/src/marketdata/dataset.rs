//! Normalized images, labels and split for one universe, ready for training.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::marketdata::csv_io::{read_rows, write_rows, LabelRow};
use crate::marketdata::cube::{load_cube, save_cube, MarketCube};
use crate::marketdata::fill::FillMode;
use crate::marketdata::image::{build_image, IndicatorPanel, MarketImage};
use crate::marketdata::indicators::{IndicatorParams, INDICATOR_NAMES};
use crate::marketdata::labels::{compute_label, HORIZONS, SIGMA_WINDOW};
use crate::marketdata::norm::{fit_norm, NormStats};
use crate::marketdata::series::{stock_order, StockSeries};
use crate::marketdata::split::{split, Partition, Split, SplitSpec};
use crate::marketdata::{DataError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub indicators: Vec<String>,
    pub params: IndicatorParams,
    pub fill: FillMode,
    pub split: SplitSpec,
    pub horizons: Vec<usize>,
    pub sigma_window: usize,
    pub lookback: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            indicators: INDICATOR_NAMES.iter().map(|s| s.to_string()).collect(),
            params: IndicatorParams::default(),
            fill: FillMode::CarryForward,
            split: SplitSpec::default(),
            horizons: HORIZONS.to_vec(),
            sigma_window: SIGMA_WINDOW,
            lookback: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub raw: f64,
    pub scaled: f64,
    pub valid: bool,
}

/// One (date, stock) training or evaluation example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub date: usize,
    pub stock: usize,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Vec<NaiveDate>,
    pub stock_order: Vec<String>,
    pub indicator_names: Vec<String>,
    /// Normalized images, row-major `[date][stock][indicator]`.
    pub images: Vec<f64>,
    pub horizons: Vec<usize>,
    labels: Vec<Label>,
    pub split: Split,
    pub norm: NormStats,
    /// Dates the normalization fit read (always a subset of the train split).
    pub norm_dates_read: Vec<NaiveDate>,
    pub degenerate_columns: Vec<String>,
    pub lookback: usize,
}

impl Dataset {
    pub fn build(series: &[StockSeries], cfg: &DatasetConfig) -> Result<Self> {
        if cfg.lookback == 0 {
            return Err(DataError::Split("lookback must be positive".into()));
        }
        let panel = IndicatorPanel::compute(series, &cfg.params, cfg.fill)?;
        let avail = panel.available();
        if avail.is_empty() {
            return Err(DataError::NoAvailableDays);
        }
        if let Some(w) = avail.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(DataError::MissingData {
                stock_id: "(some)".into(),
                date: panel.dates[w[0] + 1],
            });
        }
        let raw: Vec<MarketImage> = avail
            .iter()
            .map(|&k| build_image(&panel, panel.dates[k], &cfg.indicators))
            .collect::<Result<_>>()?;
        let dates: Vec<NaiveDate> = raw.iter().map(|i| i.date).collect();
        let split = split(&dates, &cfg.split)?;
        let fit = fit_norm(&raw[split.train.clone()])?;
        let mut images = Vec::with_capacity(raw.len() * raw[0].values.len());
        for img in &raw {
            images.extend_from_slice(&img.values);
        }
        fit.stats.normalize(&mut images);

        let order = stock_order(series);
        let mut labels = Vec::with_capacity(dates.len() * order.len() * cfg.horizons.len());
        for &k in &avail {
            for &i in &order {
                for &h in &cfg.horizons {
                    labels.push(match compute_label(&series[i].close, k, h, cfg.sigma_window) {
                        Ok(l) => Label {
                            raw: l.raw,
                            scaled: l.scaled,
                            valid: l.valid,
                        },
                        Err(_) => Label {
                            raw: f64::NAN,
                            scaled: 0.0,
                            valid: false,
                        },
                    });
                }
            }
        }
        Ok(Self {
            dates,
            stock_order: panel.stock_order.clone(),
            indicator_names: cfg.indicators.clone(),
            images,
            horizons: cfg.horizons.clone(),
            labels,
            split,
            norm: fit.stats,
            norm_dates_read: fit.dates_read,
            degenerate_columns: fit.degenerate,
            lookback: cfg.lookback,
        })
    }

    pub fn num_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn m(&self) -> usize {
        self.stock_order.len()
    }

    pub fn n(&self) -> usize {
        self.indicator_names.len()
    }

    pub fn image(&self, d: usize) -> &[f64] {
        let size = self.m() * self.n();
        &self.images[d * size..(d + 1) * size]
    }

    pub fn market_image(&self, d: usize) -> MarketImage {
        MarketImage {
            date: self.dates[d],
            stock_order: self.stock_order.clone(),
            indicator_names: self.indicator_names.clone(),
            values: self.image(d).to_vec(),
        }
    }

    /// The `lookback x m x n` cube ending (inclusively) at date `d`.
    pub fn cube(&self, d: usize) -> Option<&[f64]> {
        let size = self.m() * self.n();
        let start = (d + 1).checked_sub(self.lookback)?;
        self.images.get(start * size..(d + 1) * size)
    }

    pub fn cube_value(&self, d: usize) -> Option<MarketCube> {
        let start = (d + 1).checked_sub(self.lookback)?;
        Some(MarketCube {
            dates: self.dates[start..=d].to_vec(),
            stock_order: self.stock_order.clone(),
            indicator_names: self.indicator_names.clone(),
            values: self.cube(d)?.to_vec(),
        })
    }

    /// The stock's own `lookback x n` indicator rows ending at `d`.
    pub fn history(&self, d: usize, stock: usize) -> Option<Vec<f64>> {
        let (m, n) = (self.m(), self.n());
        let cube = self.cube(d)?;
        let mut out = Vec::with_capacity(self.lookback * n);
        for day in 0..self.lookback {
            let off = (day * m + stock) * n;
            out.extend_from_slice(&cube[off..off + n]);
        }
        Some(out)
    }

    pub fn horizon_index(&self, horizon: usize) -> Result<usize> {
        self.horizons
            .iter()
            .position(|&h| h == horizon)
            .ok_or(DataError::UnknownHorizon(horizon))
    }

    pub fn label(&self, d: usize, stock: usize, horizon_index: usize) -> Label {
        let hs = self.horizons.len();
        self.labels[(d * self.m() + stock) * hs + horizon_index]
    }

    /// Date indices of a partition that have a full lookback window.
    pub fn usable_dates(&self, partition: Partition) -> std::ops::Range<usize> {
        let r = self.split.range(partition);
        r.start.max(self.lookback - 1)..r.end.max(self.lookback - 1)
    }

    /// Valid-label samples of a partition and the count of excluded ones.
    pub fn samples(&self, partition: Partition, horizon: usize) -> Result<(Vec<Sample>, usize)> {
        let hi = self.horizon_index(horizon)?;
        let mut out = Vec::new();
        let mut invalid = 0;
        for d in self.usable_dates(partition) {
            for stock in 0..self.m() {
                let l = self.label(d, stock, hi);
                if l.valid {
                    out.push(Sample {
                        date: d,
                        stock,
                        label: l.scaled,
                    });
                } else {
                    invalid += 1;
                }
            }
        }
        Ok((out, invalid))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let cube = MarketCube {
            dates: self.dates.clone(),
            stock_order: self.stock_order.clone(),
            indicator_names: self.indicator_names.clone(),
            values: self.images.clone(),
        };
        save_cube(&cube, dir.join("images.cube"))?;
        let norm: Vec<NormRow> = (0..self.norm.n())
            .map(|j| NormRow {
                indicator: self.norm.names[j].clone(),
                min: self.norm.min[j],
                max: self.norm.max[j],
            })
            .collect();
        write_rows(&dir.join("norm.csv"), &norm)?;
        let mut rows = Vec::with_capacity(self.labels.len());
        for d in 0..self.num_dates() {
            for s in 0..self.m() {
                for (hi, &h) in self.horizons.iter().enumerate() {
                    let l = self.label(d, s, hi);
                    rows.push(LabelRow {
                        date: self.dates[d],
                        stock_id: self.stock_order[s].clone(),
                        horizon: h,
                        raw: l.raw,
                        scaled: l.scaled,
                        valid: l.valid,
                    });
                }
            }
        }
        write_rows(&dir.join("labels.csv"), &rows)?;
        let split: Vec<SplitRow> = (0..self.num_dates())
            .map(|d| SplitRow {
                date: self.dates[d],
                partition: self.split.partition_of(d).expect("split covers all dates").to_string(),
            })
            .collect();
        write_rows(&dir.join("split.csv"), &split)
    }

    pub fn load(dir: &Path, lookback: usize) -> Result<Self> {
        let cube = load_cube(dir.join("images.cube"))?;
        let norm_rows: Vec<NormRow> = read_rows(&dir.join("norm.csv"))?;
        let split_rows: Vec<SplitRow> = read_rows(&dir.join("split.csv"))?;
        let label_rows: Vec<LabelRow> = read_rows(&dir.join("labels.csv"))?;
        if split_rows.len() != cube.t() {
            return Err(DataError::Parse("split.csv does not match images.cube".into()));
        }
        let mut bounds = [0usize; 3];
        for (p, b) in Partition::ALL.iter().zip(bounds.iter_mut()) {
            *b = split_rows.iter().filter(|r| r.partition == p.as_str()).count();
        }
        let split = Split {
            train: 0..bounds[0],
            validation: bounds[0]..bounds[0] + bounds[1],
            backtest: bounds[0] + bounds[1]..cube.t(),
        };
        for (d, r) in split_rows.iter().enumerate() {
            if split.partition_of(d).map(Partition::as_str) != Some(r.partition.as_str()) {
                return Err(DataError::Parse(format!("split.csv is not chronological at row {d}")));
            }
        }
        let mut horizons: Vec<usize> = Vec::new();
        for r in &label_rows {
            if !horizons.contains(&r.horizon) {
                horizons.push(r.horizon);
            } else {
                break;
            }
        }
        let expected = cube.t() * cube.m() * horizons.len();
        if label_rows.len() != expected {
            return Err(DataError::Parse(format!(
                "labels.csv has {} rows, expected {expected}",
                label_rows.len()
            )));
        }
        let labels = label_rows
            .iter()
            .map(|r| Label {
                raw: r.raw,
                scaled: r.scaled,
                valid: r.valid,
            })
            .collect();
        Ok(Self {
            norm_dates_read: cube.dates[split.train.clone()].to_vec(),
            dates: cube.dates,
            stock_order: cube.stock_order,
            indicator_names: cube.indicator_names,
            images: cube.values,
            horizons,
            labels,
            split,
            norm: NormStats {
                names: norm_rows.iter().map(|r| r.indicator.clone()).collect(),
                min: norm_rows.iter().map(|r| r.min).collect(),
                max: norm_rows.iter().map(|r| r.max).collect(),
            },
            degenerate_columns: norm_rows
                .iter()
                .filter(|r| r.min == r.max)
                .map(|r| r.indicator.clone())
                .collect(),
            lookback,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormRow {
    indicator: String,
    min: f64,
    max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRow {
    date: NaiveDate,
    partition: String,
}
