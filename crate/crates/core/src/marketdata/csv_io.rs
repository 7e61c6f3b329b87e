//! CSV readers and writers for raw series, universes and labels.
//!
//! A data directory holds `universe.csv`, `prices/<stock_id>.csv` and
//! `fundamentals/<stock_id>.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::marketdata::series::StockSeries;
use crate::marketdata::{DataError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseRow {
    pub stock_id: String,
    pub sector_id: u16,
    pub subsector_id: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PriceRow {
    date: NaiveDate,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct FundamentalRow {
    date: NaiveDate,
    eps: f64,
    cur_ratio: f64,
    debt_to_equity: f64,
    fncl_lvgr: f64,
    return_tot_eqy: f64,
    pe_ratio: f64,
    short_int_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub date: NaiveDate,
    pub stock_id: String,
    pub horizon: usize,
    pub raw: f64,
    pub scaled: f64,
    pub valid: bool,
}

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(DataError::MissingInput(path.to_path_buf()));
    }
    csv::Reader::from_path(path).map_err(|e| DataError::csv(path, e))
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| DataError::csv(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    reader(path)?
        .deserialize()
        .map(|r| r.map_err(|e| DataError::csv(path, e)))
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

pub fn prices_path(dir: &Path, stock_id: &str) -> PathBuf {
    dir.join("prices").join(format!("{stock_id}.csv"))
}

pub fn fundamentals_path(dir: &Path, stock_id: &str) -> PathBuf {
    dir.join("fundamentals").join(format!("{stock_id}.csv"))
}

pub fn write_series_dir(dir: &Path, series: &[StockSeries]) -> Result<()> {
    let universe: Vec<UniverseRow> = series
        .iter()
        .map(|s| UniverseRow {
            stock_id: s.stock_id.clone(),
            sector_id: s.sector_id,
            subsector_id: s.subsector_id,
        })
        .collect();
    write_rows(&dir.join("universe.csv"), &universe)?;
    for s in series {
        let prices: Vec<PriceRow> = (0..s.len())
            .map(|k| PriceRow {
                date: s.dates[k],
                open: s.open[k],
                high: s.high[k],
                low: s.low[k],
                close: s.close[k],
                volume: s.volume[k],
            })
            .collect();
        write_rows(&prices_path(dir, &s.stock_id), &prices)?;
        let fundamentals: Vec<FundamentalRow> = s
            .fundamentals
            .iter()
            .map(|(&date, f)| FundamentalRow {
                date,
                eps: f[0],
                cur_ratio: f[1],
                debt_to_equity: f[2],
                fncl_lvgr: f[3],
                return_tot_eqy: f[4],
                pe_ratio: f[5],
                short_int_ratio: f[6],
            })
            .collect();
        write_rows(&fundamentals_path(dir, &s.stock_id), &fundamentals)?;
    }
    Ok(())
}

pub fn read_series_dir(dir: &Path) -> Result<Vec<StockSeries>> {
    let universe: Vec<UniverseRow> = read_rows(&dir.join("universe.csv"))?;
    if universe.is_empty() {
        return Err(DataError::EmptyUniverse);
    }
    universe
        .into_iter()
        .map(|u| {
            let prices: Vec<PriceRow> = read_rows(&prices_path(dir, &u.stock_id))?;
            let fundamentals: Vec<FundamentalRow> = read_rows(&fundamentals_path(dir, &u.stock_id))?;
            let s = StockSeries {
                stock_id: u.stock_id,
                sector_id: u.sector_id,
                subsector_id: u.subsector_id,
                dates: prices.iter().map(|p| p.date).collect(),
                open: prices.iter().map(|p| p.open).collect(),
                high: prices.iter().map(|p| p.high).collect(),
                low: prices.iter().map(|p| p.low).collect(),
                close: prices.iter().map(|p| p.close).collect(),
                volume: prices.iter().map(|p| p.volume).collect(),
                fundamentals: fundamentals
                    .iter()
                    .map(|f| {
                        (
                            f.date,
                            [
                                f.eps,
                                f.cur_ratio,
                                f.debt_to_equity,
                                f.fncl_lvgr,
                                f.return_tot_eqy,
                                f.pe_ratio,
                                f.short_int_ratio,
                            ],
                        )
                    })
                    .collect::<BTreeMap<_, _>>(),
            };
            s.validate()?;
            Ok(s)
        })
        .collect()
}
