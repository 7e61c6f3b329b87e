//! Market cubes and their binary file format.
//!
//! ```text
//! "MKCU" | version u32 | t u32 | m u32 | n u32
//! dates: t * i32 (days from CE)
//! stock_order: m * (len u32 | utf-8)
//! indicator_names: n * (len u32 | utf-8)
//! values: t*m*n * f64, row-major [day][stock][indicator]
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::autodiff::checkpoint::{CheckpointError, Reader};
use crate::marketdata::image::MarketImage;
use crate::marketdata::{DataError, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"MKCU";
pub const CUBE_VERSION: u32 = 1;

/// `t` stacked market images sharing one row order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCube {
    pub dates: Vec<NaiveDate>,
    pub stock_order: Vec<String>,
    pub indicator_names: Vec<String>,
    /// Row-major `t x m x n`.
    pub values: Vec<f64>,
}

impl MarketCube {
    pub fn t(&self) -> usize {
        self.dates.len()
    }

    pub fn m(&self) -> usize {
        self.stock_order.len()
    }

    pub fn n(&self) -> usize {
        self.indicator_names.len()
    }

    pub fn from_images(images: &[MarketImage]) -> Result<Self> {
        let first = images.first().ok_or(DataError::EmptyTraining)?;
        let mut values = Vec::with_capacity(images.len() * first.values.len());
        for img in images {
            if img.stock_order != first.stock_order {
                return Err(DataError::RowOrderMismatch(img.date));
            }
            if img.indicator_names != first.indicator_names {
                return Err(DataError::ColumnMismatch);
            }
            values.extend_from_slice(&img.values);
        }
        if images.windows(2).any(|w| w[1].date <= w[0].date) {
            return Err(DataError::Split("cube dates must be strictly increasing".into()));
        }
        Ok(Self {
            dates: images.iter().map(|i| i.date).collect(),
            stock_order: first.stock_order.clone(),
            indicator_names: first.indicator_names.clone(),
            values,
        })
    }

    pub fn image(&self, day: usize) -> MarketImage {
        let size = self.m() * self.n();
        MarketImage {
            date: self.dates[day],
            stock_order: self.stock_order.clone(),
            indicator_names: self.indicator_names.clone(),
            values: self.values[day * size..(day + 1) * size].to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.values.len() * 8);
        out.extend_from_slice(CUBE_MAGIC);
        for x in [CUBE_VERSION, self.t() as u32, self.m() as u32, self.n() as u32] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for d in &self.dates {
            out.extend_from_slice(&d.num_days_from_ce().to_le_bytes());
        }
        for s in self.stock_order.iter().chain(&self.indicator_names) {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(cube_err)? != CUBE_MAGIC {
            return Err(DataError::CubeFormat {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version = r.u32().map_err(cube_err)?;
        if version != CUBE_VERSION {
            return Err(DataError::CubeFormat {
                offset: 4,
                reason: format!("unsupported version {version} (expected {CUBE_VERSION})"),
            });
        }
        let t = r.u32().map_err(cube_err)? as usize;
        let m = r.u32().map_err(cube_err)? as usize;
        let n = r.u32().map_err(cube_err)? as usize;
        let mut dates = Vec::with_capacity(t.min(1 << 20));
        for _ in 0..t {
            let at = r.pos;
            let days = r.i32().map_err(cube_err)?;
            dates.push(NaiveDate::from_num_days_from_ce_opt(days).ok_or(DataError::CubeFormat {
                offset: at,
                reason: format!("invalid date {days}"),
            })?);
        }
        let mut strings = |count: usize| -> Result<Vec<String>> {
            (0..count).map(|_| r.string().map_err(cube_err)).collect()
        };
        let stock_order = strings(m)?;
        let indicator_names = strings(n)?;
        let total = t
            .checked_mul(m)
            .and_then(|x| x.checked_mul(n))
            .ok_or(DataError::CubeFormat {
                offset: 8,
                reason: "dimension overflow".into(),
            })?;
        let values = r.f64s(total).map_err(cube_err)?;
        if r.pos != bytes.len() {
            return Err(DataError::CubeFormat {
                offset: r.pos,
                reason: "trailing bytes".into(),
            });
        }
        Ok(Self {
            dates,
            stock_order,
            indicator_names,
            values,
        })
    }
}

fn cube_err(e: CheckpointError) -> DataError {
    match e {
        CheckpointError::Truncated { offset, needed } => DataError::CubeFormat {
            offset,
            reason: format!("truncated, needed {needed} more bytes"),
        },
        CheckpointError::Corrupt { offset, reason } => DataError::CubeFormat { offset, reason },
        other => DataError::CubeFormat {
            offset: 0,
            reason: other.to_string(),
        },
    }
}

pub fn save_cube(cube: &MarketCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cube.to_bytes()).map_err(|e| DataError::io(path, e))
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<MarketCube> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    MarketCube::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> MarketCube {
        let d0 = NaiveDate::from_ymd_opt(2004, 2, 2).unwrap();
        MarketCube {
            dates: vec![d0, d0.succ_opt().unwrap()],
            stock_order: vec!["A".into(), "BB".into(), "C".into()],
            indicator_names: vec!["x".into(), "yy".into()],
            values: (0..12).map(|i| (i as f64).sin() * 1e-3).collect(),
        }
    }

    #[test]
    fn round_trip_bytes() {
        let c = cube();
        let bytes = c.to_bytes();
        let back = MarketCube::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = cube().to_bytes();
        let cut = bytes.len() - 5;
        match MarketCube::from_bytes(&bytes[..cut]) {
            Err(DataError::CubeFormat { offset, .. }) => assert!(offset <= cut && offset > 20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = cube().to_bytes();
        bytes[4] = 2;
        let err = MarketCube::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
