//! Densifying quarterly fundamentals onto the daily calendar.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::marketdata::series::Fundamentals;
use crate::marketdata::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillMode {
    /// Each day takes the most recent observation on or before it.
    #[default]
    CarryForward,
    /// Each day takes the next observation on or after it (uses future data).
    PaperBackward,
}

impl FromStr for FillMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carry-forward" => Ok(Self::CarryForward),
            "paper-backward" => Ok(Self::PaperBackward),
            other => Err(DataError::Parse(format!("unknown fill mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for FillMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CarryForward => "carry-forward",
            Self::PaperBackward => "paper-backward",
        })
    }
}

/// Per-day fundamentals; `None` where the policy has nothing to fill with
/// (before the first observation for carry-forward, after the last one for
/// backward fill).
pub fn fill_fundamentals(
    dates: &[NaiveDate],
    observations: &BTreeMap<NaiveDate, Fundamentals>,
    mode: FillMode,
) -> Result<Vec<Option<Fundamentals>>> {
    if observations.is_empty() {
        return Err(DataError::NoFundamentals { stock_id: String::new() });
    }
    Ok(dates
        .iter()
        .map(|d| match mode {
            FillMode::CarryForward => observations.range(..=*d).next_back().map(|(_, v)| *v),
            FillMode::PaperBackward => observations.range(*d..).next().map(|(_, v)| *v),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(k: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Duration::days(k)
    }

    fn obs() -> BTreeMap<NaiveDate, Fundamentals> {
        BTreeMap::from([(day(0), [1.0; 7]), (day(90), [2.0; 7])])
    }

    #[test]
    fn carry_forward_uses_prior_observation() {
        let f = fill_fundamentals(&[day(45)], &obs(), FillMode::CarryForward).unwrap();
        assert_eq!(f[0], Some([1.0; 7]));
    }

    #[test]
    fn paper_backward_uses_next_observation() {
        let f = fill_fundamentals(&[day(45)], &obs(), FillMode::PaperBackward).unwrap();
        assert_eq!(f[0], Some([2.0; 7]));
    }

    #[test]
    fn modes_agree_on_observation_days() {
        let grid: BTreeMap<_, _> = (0..8).map(|q| (day(q * 91), [q as f64; 7])).collect();
        let dates: Vec<_> = grid.keys().copied().collect();
        let a = fill_fundamentals(&dates, &grid, FillMode::CarryForward).unwrap();
        let b = fill_fundamentals(&dates, &grid, FillMode::PaperBackward).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().zip(grid.values()).all(|(x, y)| x.as_ref() == Some(y)));
    }

    #[test]
    fn edges_and_empty() {
        let f = fill_fundamentals(&[day(-1), day(91)], &obs(), FillMode::CarryForward).unwrap();
        assert_eq!(f, vec![None, Some([2.0; 7])]);
        let f = fill_fundamentals(&[day(-1), day(91)], &obs(), FillMode::PaperBackward).unwrap();
        assert_eq!(f, vec![Some([1.0; 7]), None]);
        assert!(fill_fundamentals(&[day(0)], &BTreeMap::new(), FillMode::CarryForward).is_err());
    }
}
