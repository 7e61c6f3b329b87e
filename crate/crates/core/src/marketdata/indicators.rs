//! Technical indicator kernels and the per-stock indicator table.
//!
//! Every kernel returns one `Option` per input day; `None` marks the warm-up
//! region where the indicator is not yet defined.

use crate::marketdata::fill::{fill_fundamentals, FillMode};
use crate::marketdata::series::{StockSeries, FUNDAMENTAL_NAMES};
use crate::marketdata::{DataError, Result};
use crate::scalar::Scalar;

/// Version of [`INDICATOR_NAMES`]; bump whenever the column list changes.
pub const MANIFEST_VERSION: u32 = 1;

/// Full indicator manifest in image column order.
pub const INDICATOR_NAMES: [&str; 40] = [
    // price-volume ratios
    "close_open",
    "high_open",
    "low_open",
    "close_high",
    "close_low",
    "high_low",
    // daily returns 1..5 days back
    "ret_lag1",
    "ret_lag2",
    "ret_lag3",
    "ret_lag4",
    "ret_lag5",
    // cumulative returns
    "cumret_5",
    "cumret_10",
    "cumret_15",
    "cumret_20",
    "cumret_25",
    "cumret_30",
    // technicals
    "boll_pctb",
    "boll_bandwidth",
    "dmi_plus",
    "dmi_minus",
    "adx",
    "rsi",
    "macd",
    "macd_signal",
    "macd_hist",
    "roc",
    "momentum",
    // fundamentals
    "eps",
    "cur_ratio",
    "debt_to_equity",
    "fncl_lvgr",
    "return_tot_eqy",
    "pe_ratio",
    "short_int_ratio",
    // supplementary price-volume
    "volume_ratio_20",
    "volatility_10",
    "volatility_30",
    "close_sma_10",
    "close_sma_30",
];

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorParams {
    pub rsi: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub roc: usize,
    pub momentum: usize,
    pub boll_period: usize,
    pub boll_width: f64,
    pub dmi: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            rsi: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            roc: 10,
            momentum: 10,
            boll_period: 20,
            boll_width: 2.0,
            dmi: 14,
        }
    }
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_usize(xs.len()).unwrap()
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let mu = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - mu) * (x - mu)).sum();
    (ss / T::from_usize(xs.len() - 1).unwrap()).sqrt()
}

/// Simple daily returns; entry 0 is `None`.
pub fn daily_returns<T: Scalar>(close: &[T]) -> Vec<Option<T>> {
    (0..close.len())
        .map(|k| (k > 0).then(|| close[k] / close[k - 1] - T::one()))
        .collect()
}

pub fn sma<T: Scalar>(x: &[T], period: usize) -> Vec<Option<T>> {
    let mut out = vec![None; x.len()];
    let mut acc = T::zero();
    for k in 0..x.len() {
        acc += x[k];
        if k >= period {
            acc -= x[k - period];
        }
        if k + 1 >= period {
            // re-sum periodically would be more stable; windows here are short
            out[k] = Some(acc / T::from_usize(period).unwrap());
        }
    }
    out
}

/// EMA with smoothing `2 / (period + 1)`, seeded by the SMA of the first
/// `period` defined values of `x`.
pub fn ema<T: Scalar>(x: &[Option<T>], period: usize) -> Vec<Option<T>> {
    let alpha = T::lit(2.0) / T::from_usize(period + 1).unwrap();
    let mut out = vec![None; x.len()];
    let mut seed = Vec::with_capacity(period);
    let mut prev: Option<T> = None;
    for (k, v) in x.iter().enumerate() {
        let Some(v) = *v else { continue };
        match prev {
            Some(p) => {
                let e = alpha * v + (T::one() - alpha) * p;
                out[k] = Some(e);
                prev = Some(e);
            }
            None => {
                seed.push(v);
                if seed.len() == period {
                    let e = mean(&seed);
                    out[k] = Some(e);
                    prev = Some(e);
                }
            }
        }
    }
    out
}

/// Wilder RSI; a flat window (no gains, no losses) reads 50.
pub fn rsi<T: Scalar>(close: &[T], period: usize) -> Vec<Option<T>> {
    let mut out = vec![None; close.len()];
    if close.len() <= period {
        return out;
    }
    let p = T::from_usize(period).unwrap();
    let hundred = T::lit(100.0);
    let value = |g: T, l: T| {
        if l == T::zero() {
            if g == T::zero() {
                T::lit(50.0)
            } else {
                hundred
            }
        } else {
            hundred - hundred / (T::one() + g / l)
        }
    };
    let (mut g, mut l) = (T::zero(), T::zero());
    for k in 1..=period {
        let d = close[k] - close[k - 1];
        g += d.max(T::zero());
        l += (-d).max(T::zero());
    }
    g = g / p;
    l = l / p;
    out[period] = Some(value(g, l));
    for k in period + 1..close.len() {
        let d = close[k] - close[k - 1];
        g = (g * (p - T::one()) + d.max(T::zero())) / p;
        l = (l * (p - T::one()) + (-d).max(T::zero())) / p;
        out[k] = Some(value(g, l));
    }
    out
}

/// MACD line, signal and histogram, each divided by the day's close.
pub fn macd<T: Scalar>(close: &[T], fast: usize, slow: usize, signal: usize) -> Vec<Option<[T; 3]>> {
    let wrapped: Vec<Option<T>> = close.iter().copied().map(Some).collect();
    let ef = ema(&wrapped, fast);
    let es = ema(&wrapped, slow);
    let line: Vec<Option<T>> = ef
        .iter()
        .zip(&es)
        .map(|(a, b)| Some((*a)? - (*b)?))
        .collect();
    let sig = ema(&line, signal);
    (0..close.len())
        .map(|k| {
            let (l, s) = (line[k]?, sig[k]?);
            Some([l / close[k], s / close[k], (l - s) / close[k]])
        })
        .collect()
}

/// Percent rate of change over `period` days.
pub fn roc<T: Scalar>(close: &[T], period: usize) -> Vec<Option<T>> {
    (0..close.len())
        .map(|k| (k >= period).then(|| T::lit(100.0) * (close[k] / close[k - period] - T::one())))
        .collect()
}

/// Price difference over `period` days.
pub fn momentum<T: Scalar>(close: &[T], period: usize) -> Vec<Option<T>> {
    (0..close.len())
        .map(|k| (k >= period).then(|| close[k] - close[k - period]))
        .collect()
}

/// Bollinger %B and bandwidth using the population standard deviation.
/// A zero-width band reads %B = 0.5.
pub fn bollinger<T: Scalar>(close: &[T], period: usize, width: T) -> Vec<Option<[T; 2]>> {
    let mut out = vec![None; close.len()];
    for k in period.saturating_sub(1)..close.len() {
        let w = &close[k + 1 - period..=k];
        let mu = mean(w);
        let var: T = w.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() / T::from_usize(period).unwrap();
        let sd = var.sqrt();
        let upper = mu + width * sd;
        let lower = mu - width * sd;
        let pctb = if upper > lower {
            (close[k] - lower) / (upper - lower)
        } else {
            T::lit(0.5)
        };
        out[k] = Some([pctb, (upper - lower) / mu]);
    }
    out
}

/// Wilder directional movement: `[+DI, -DI, ADX]`.
pub fn dmi<T: Scalar>(high: &[T], low: &[T], close: &[T], period: usize) -> Vec<Option<[T; 3]>> {
    let len = close.len();
    let mut out = vec![None; len];
    if len <= period {
        return out;
    }
    let p = T::from_usize(period).unwrap();
    let hundred = T::lit(100.0);
    let (mut s_tr, mut s_pdm, mut s_mdm) = (T::zero(), T::zero(), T::zero());
    let mut dx_seed = Vec::with_capacity(period);
    let mut adx: Option<T> = None;
    for k in 1..len {
        let up = high[k] - high[k - 1];
        let down = low[k - 1] - low[k];
        let pdm = if up > down && up > T::zero() { up } else { T::zero() };
        let mdm = if down > up && down > T::zero() { down } else { T::zero() };
        let tr = (high[k] - low[k])
            .max((high[k] - close[k - 1]).abs())
            .max((low[k] - close[k - 1]).abs());
        if k <= period {
            s_tr += tr;
            s_pdm += pdm;
            s_mdm += mdm;
        } else {
            s_tr = s_tr - s_tr / p + tr;
            s_pdm = s_pdm - s_pdm / p + pdm;
            s_mdm = s_mdm - s_mdm / p + mdm;
        }
        if k < period {
            continue;
        }
        let (pdi, mdi) = if s_tr > T::zero() {
            (hundred * s_pdm / s_tr, hundred * s_mdm / s_tr)
        } else {
            (T::zero(), T::zero())
        };
        let dx = if pdi + mdi > T::zero() {
            hundred * (pdi - mdi).abs() / (pdi + mdi)
        } else {
            T::zero()
        };
        adx = match adx {
            Some(a) => Some((a * (p - T::one()) + dx) / p),
            None => {
                dx_seed.push(dx);
                (dx_seed.len() == period).then(|| mean(&dx_seed))
            }
        };
        if let Some(a) = adx {
            out[k] = Some([pdi, mdi, a]);
        }
    }
    out
}

/// Per-day indicator rows for one stock. `rows[k]` is `None` until every
/// column is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTable {
    pub names: Vec<String>,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl IndicatorTable {
    pub fn first_available(&self) -> Option<usize> {
        self.rows.iter().position(Option::is_some)
    }
}

/// Computes the full manifest for one stock.
pub fn compute_indicators(series: &StockSeries, params: &IndicatorParams, fill: FillMode) -> Result<IndicatorTable> {
    series.validate()?;
    let c = &series.close;
    let (o, h, l, v) = (&series.open, &series.high, &series.low, &series.volume);
    let len = c.len();
    let rets = daily_returns(c);
    let rets_dense: Vec<f64> = rets.iter().map(|r| r.unwrap_or(0.0)).collect();
    let boll = bollinger(c, params.boll_period, params.boll_width);
    let dm = dmi(h, l, c, params.dmi);
    let rs = rsi(c, params.rsi);
    let mc = macd(c, params.macd_fast, params.macd_slow, params.macd_signal);
    let rc = roc(c, params.roc);
    let mo = momentum(c, params.momentum);
    let vol_sma = sma(v, 20);
    let sma10 = sma(c, 10);
    let sma30 = sma(c, 30);
    let fundamentals = fill_fundamentals(&series.dates, &series.fundamentals, fill)
        .map_err(|e| e.for_stock(&series.stock_id))?;

    let volatility = |k: usize, w: usize| -> Option<f64> {
        (k >= w).then(|| sample_std(&rets_dense[k + 1 - w..=k]))
    };

    let mut rows = Vec::with_capacity(len);
    for k in 0..len {
        let row = (|| -> Option<Vec<f64>> {
            let mut r = Vec::with_capacity(INDICATOR_NAMES.len());
            r.extend([c[k] / o[k], h[k] / o[k], l[k] / o[k], c[k] / h[k], c[k] / l[k], h[k] / l[k]]);
            for lag in 1..=5 {
                r.push(rets[k.checked_sub(lag - 1)?]?);
            }
            for span in [5, 10, 15, 20, 25, 30] {
                r.push(c[k] / c[k.checked_sub(span)?] - 1.0);
            }
            r.extend(boll[k]?);
            r.extend(dm[k]?);
            r.push(rs[k]?);
            r.extend(mc[k]?);
            r.push(rc[k]?);
            r.push(mo[k]?);
            r.extend(fundamentals[k]?);
            let vm = vol_sma[k]?;
            r.push(if vm > 0.0 { v[k] / vm } else { 1.0 });
            r.push(volatility(k, 10)?);
            r.push(volatility(k, 30)?);
            r.push(c[k] / sma10[k]?);
            r.push(c[k] / sma30[k]?);
            Some(r)
        })();
        rows.push(row);
    }
    debug_assert_eq!(FUNDAMENTAL_NAMES.len(), 7);
    Ok(IndicatorTable {
        names: INDICATOR_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

/// Resolves a list of indicator names to manifest column positions.
pub fn resolve_columns(names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            INDICATOR_NAMES
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| DataError::UnknownIndicator(n.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_reads_neutral() {
        let c = vec![10.0; 40];
        assert!(rsi(&c, 14)[20].unwrap() == 50.0);
        assert_eq!(momentum(&c, 10)[20], Some(0.0));
        assert_eq!(roc(&c, 10)[20], Some(0.0));
        assert_eq!(bollinger(&c, 20, 2.0)[25], Some([0.5, 0.0]));
        assert_eq!(dmi(&c, &c, &c, 14)[30], Some([0.0, 0.0, 0.0]));
    }

    #[test]
    fn warmup_positions() {
        let c: Vec<f64> = (0..60).map(|i| 100.0 + (i as f64).sin()).collect();
        assert!(rsi(&c, 14)[13].is_none() && rsi(&c, 14)[14].is_some());
        let m = macd(&c, 12, 26, 9);
        assert!(m[32].is_none() && m[33].is_some());
        let d = dmi(&c, &c, &c, 14);
        assert!(d[26].is_none() && d[27].is_some());
        let b = bollinger(&c, 20, 2.0);
        assert!(b[18].is_none() && b[19].is_some());
    }

    #[test]
    fn ema_seeds_with_sma() {
        let x: Vec<Option<f64>> = [1.0, 2.0, 3.0, 4.0].iter().copied().map(Some).collect();
        let e = ema(&x, 3);
        assert_eq!(e[1], None);
        assert_eq!(e[2], Some(2.0));
        assert_eq!(e[3], Some(0.5 * 4.0 + 0.5 * 2.0));
    }

    #[test]
    fn works_in_single_precision() {
        let c: Vec<f32> = (0..30).map(|i| 50.0 + i as f32).collect();
        assert_eq!(rsi(&c, 14)[20], Some(100.0));
    }
}
