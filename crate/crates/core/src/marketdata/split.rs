use std::ops::Range;

use chrono::NaiveDate;

use crate::marketdata::{DataError, Result};

/// Trading-day counts of the reference train / validation / backtest periods.
pub const REFERENCE_DAYS: [usize; 3] = [3265, 754, 504];

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Fractions of the date list for train and validation; the rest is backtest.
    Proportions { train: f64, validation: f64 },
    /// First validation date and first backtest date; a boundary date
    /// belongs to the later partition.
    Boundaries {
        validation_start: NaiveDate,
        backtest_start: NaiveDate,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        let total = REFERENCE_DAYS.iter().sum::<usize>() as f64;
        Self::Proportions {
            train: REFERENCE_DAYS[0] as f64 / total,
            validation: REFERENCE_DAYS[1] as f64 / total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Validation,
    Backtest,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Backtest];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Backtest => "backtest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| DataError::Parse(format!("unknown partition {s:?}")))
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contiguous, chronologically ordered index ranges into a date list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub backtest: Range<usize>,
}

impl Split {
    pub fn range(&self, p: Partition) -> Range<usize> {
        match p {
            Partition::Train => self.train.clone(),
            Partition::Validation => self.validation.clone(),
            Partition::Backtest => self.backtest.clone(),
        }
    }

    pub fn partition_of(&self, index: usize) -> Option<Partition> {
        Partition::ALL.into_iter().find(|&p| self.range(p).contains(&index))
    }
}

pub fn split(dates: &[NaiveDate], spec: &SplitSpec) -> Result<Split> {
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DataError::Split("dates must be strictly increasing".into()));
    }
    let total = dates.len();
    let (a, b) = match spec {
        SplitSpec::Proportions { train, validation } => {
            if !(*train > 0.0 && *validation >= 0.0 && train + validation <= 1.0) {
                return Err(DataError::Split(format!(
                    "invalid proportions train={train} validation={validation}"
                )));
            }
            let a = (total as f64 * train).round() as usize;
            let b = (a + (total as f64 * validation).round() as usize).min(total);
            (a, b)
        }
        SplitSpec::Boundaries {
            validation_start,
            backtest_start,
        } => {
            if backtest_start <= validation_start {
                return Err(DataError::Split(format!(
                    "backtest start {backtest_start} must follow validation start {validation_start}"
                )));
            }
            let a = dates.partition_point(|d| d < validation_start);
            let b = dates.partition_point(|d| d < backtest_start);
            (a, b)
        }
    };
    if a == 0 {
        return Err(DataError::Split("training partition is empty".into()));
    }
    Ok(Split {
        train: 0..a,
        validation: a..b,
        backtest: b..total,
    })
}
