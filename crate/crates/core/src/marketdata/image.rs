use chrono::NaiveDate;

use crate::marketdata::fill::FillMode;
use crate::marketdata::indicators::{compute_indicators, resolve_columns, IndicatorParams, IndicatorTable};
use crate::marketdata::series::{stock_order, StockSeries};
use crate::marketdata::{DataError, Result};

/// One day's `m x n` indicator matrix, rows in sector order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketImage {
    pub date: NaiveDate,
    pub stock_order: Vec<String>,
    pub indicator_names: Vec<String>,
    /// Row-major `m x n`.
    pub values: Vec<f64>,
}

impl MarketImage {
    pub fn m(&self) -> usize {
        self.stock_order.len()
    }

    pub fn n(&self) -> usize {
        self.indicator_names.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.n();
        &self.values[row * n..(row + 1) * n]
    }
}

/// Indicator tables for a whole universe on a shared trading calendar,
/// stored in image row order.
#[derive(Debug, Clone)]
pub struct IndicatorPanel {
    pub dates: Vec<NaiveDate>,
    pub stock_order: Vec<String>,
    pub sectors: Vec<u16>,
    pub tables: Vec<IndicatorTable>,
}

impl IndicatorPanel {
    pub fn compute(series: &[StockSeries], params: &IndicatorParams, fill: FillMode) -> Result<Self> {
        let Some(first) = series.first() else {
            return Err(DataError::EmptyUniverse);
        };
        for s in series {
            if s.dates != first.dates {
                return Err(DataError::CalendarMismatch {
                    stock_id: s.stock_id.clone(),
                });
            }
        }
        let order = stock_order(series);
        let tables = order
            .iter()
            .map(|&i| compute_indicators(&series[i], params, fill))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dates: first.dates.clone(),
            stock_order: order.iter().map(|&i| series[i].stock_id.clone()).collect(),
            sectors: order.iter().map(|&i| series[i].sector_id).collect(),
            tables,
        })
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Calendar positions on which every stock has a complete row.
    pub fn available(&self) -> Vec<usize> {
        (0..self.dates.len())
            .filter(|&k| self.tables.iter().all(|t| t.rows[k].is_some()))
            .collect()
    }
}

/// Assembles the raw (un-normalized) image for `date`.
pub fn build_image(panel: &IndicatorPanel, date: NaiveDate, indicator_order: &[String]) -> Result<MarketImage> {
    let k = panel.date_index(date).ok_or(DataError::UnknownDate(date))?;
    let cols = resolve_columns(indicator_order)?;
    let mut values = Vec::with_capacity(panel.stock_order.len() * cols.len());
    for (table, id) in panel.tables.iter().zip(&panel.stock_order) {
        let row = table.rows[k].as_ref().ok_or_else(|| DataError::MissingData {
            stock_id: id.clone(),
            date,
        })?;
        values.extend(cols.iter().map(|&c| row[c]));
    }
    Ok(MarketImage {
        date,
        stock_order: panel.stock_order.clone(),
        indicator_names: indicator_order.to_vec(),
        values,
    })
}
