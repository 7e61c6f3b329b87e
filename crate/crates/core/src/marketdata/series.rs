use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::marketdata::{DataError, Result};

/// Column names of the quarterly fundamentals, in CSV and image order.
pub const FUNDAMENTAL_NAMES: [&str; 7] = [
    "eps",
    "cur_ratio",
    "debt_to_equity",
    "fncl_lvgr",
    "return_tot_eqy",
    "pe_ratio",
    "short_int_ratio",
];

pub type Fundamentals = [f64; 7];

/// Daily bars plus sparse fundamentals for one stock.
#[derive(Debug, Clone, PartialEq)]
pub struct StockSeries {
    pub stock_id: String,
    pub sector_id: u16,
    pub subsector_id: u16,
    pub dates: Vec<NaiveDate>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
    pub fundamentals: BTreeMap<NaiveDate, Fundamentals>,
}

impl StockSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Checks bar consistency and strictly increasing dates.
    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        let bad = |reason: String| DataError::InvalidSeries {
            stock_id: self.stock_id.clone(),
            reason,
        };
        for (name, col) in [
            ("open", &self.open),
            ("high", &self.high),
            ("low", &self.low),
            ("close", &self.close),
            ("volume", &self.volume),
        ] {
            if col.len() != n {
                return Err(bad(format!("{name} has {} rows, dates has {n}", col.len())));
            }
        }
        for k in 0..n {
            if k > 0 && self.dates[k] <= self.dates[k - 1] {
                return Err(bad(format!("dates not strictly increasing at {}", self.dates[k])));
            }
            let (o, h, l, c) = (self.open[k], self.high[k], self.low[k], self.close[k]);
            if !(o > 0.0 && h > 0.0 && l > 0.0 && c > 0.0) {
                return Err(bad(format!("non-positive price on {}", self.dates[k])));
            }
            if !(l <= o.min(c) && o.max(c) <= h) {
                return Err(bad(format!("inconsistent bar on {}", self.dates[k])));
            }
            if !(self.volume[k] >= 0.0) {
                return Err(bad(format!("negative volume on {}", self.dates[k])));
            }
        }
        Ok(())
    }
}

/// Row order of a market image: by (sector, subsector, stock id).
pub fn stock_order(series: &[StockSeries]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..series.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (&series[a], &series[b]);
        (sa.sector_id, sa.subsector_id, &sa.stock_id).cmp(&(sb.sector_id, sb.subsector_id, &sb.stock_id))
    });
    idx
}
