//! Synthetic sector-factor market.
//!
//! Daily log-returns are `beta_mkt * market + beta_sec * sector + idio`.
//! Factors are stationary AR(1) processes; a non-zero `cross_coupling`
//! adds a nonlinear dependence of each sector on its neighbour's magnitude,
//! a non-zero `lead_lag` makes every other sector follow the first sector's
//! previous-day move, and `idio_autocorr` gives each stock's own noise
//! AR(1) persistence.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::marketdata::series::{Fundamentals, StockSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub stocks: usize,
    pub sectors: usize,
    pub subsectors_per_sector: usize,
    pub days: usize,
    pub market_sigma: f64,
    pub sector_sigma: f64,
    pub idio_sigma: f64,
    pub beta_mkt: (f64, f64),
    pub beta_sec: (f64, f64),
    pub market_autocorr: f64,
    pub sector_autocorr: f64,
    /// AR(1) coefficient of each stock's idiosyncratic return.
    pub idio_autocorr: f64,
    pub cross_coupling: f64,
    pub lead_lag: f64,
    /// Days between fundamentals releases.
    pub fundamentals_every: usize,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stocks: 20,
            sectors: 4,
            subsectors_per_sector: 2,
            days: 600,
            market_sigma: 0.01,
            sector_sigma: 0.01,
            idio_sigma: 0.005,
            beta_mkt: (0.5, 1.5),
            beta_sec: (0.3, 1.0),
            market_autocorr: 0.0,
            sector_autocorr: 0.0,
            idio_autocorr: 0.0,
            cross_coupling: 0.0,
            lead_lag: 0.0,
            fundamentals_every: 63,
            start: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
        }
    }
}

/// Business days (Mon-Fri) starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, sigma: f64, phi: f64) -> Vec<f64> {
    let innov = sigma * (1.0 - phi * phi).max(0.0).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut prev = sigma * normal(rng);
    for _ in 0..n {
        let v = phi * prev + innov * normal(rng);
        x.push(v);
        prev = v;
    }
    x
}

const FUNDAMENTAL_CENTRES: Fundamentals = [2.0, 1.5, 1.0, 2.5, 0.12, 18.0, 3.0];

/// Synthetic universe with default factor settings.
pub fn synth_market(seed: u64, m_stocks: usize, n_sectors: usize, n_days: usize) -> Vec<StockSeries> {
    synth_market_with(
        seed,
        &SynthConfig {
            stocks: m_stocks,
            sectors: n_sectors,
            days: n_days,
            ..SynthConfig::default()
        },
    )
}

pub fn synth_market_with(seed: u64, cfg: &SynthConfig) -> Vec<StockSeries> {
    assert!(cfg.sectors >= 1 && cfg.stocks >= cfg.sectors, "need stocks >= sectors >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = business_days(cfg.start, cfg.days);
    let market = ar1(&mut rng, cfg.days, cfg.market_sigma, cfg.market_autocorr);
    let mut sectors: Vec<Vec<f64>> = (0..cfg.sectors)
        .map(|_| ar1(&mut rng, cfg.days, cfg.sector_sigma, cfg.sector_autocorr))
        .collect();
    if cfg.cross_coupling != 0.0 && cfg.sectors > 1 && cfg.sector_sigma > 0.0 {
        // mean-zero |x| term: E|N(0,1)| = sqrt(2/pi)
        let centre = (2.0 / std::f64::consts::PI).sqrt();
        let base = sectors.clone();
        for k in 0..cfg.sectors {
            let src = &base[(k + cfg.sectors - 1) % cfg.sectors];
            for d in 0..cfg.days {
                sectors[k][d] += cfg.cross_coupling * cfg.sector_sigma * ((src[d] / cfg.sector_sigma).abs() - centre);
            }
        }
    }
    if cfg.lead_lag != 0.0 {
        let leader = sectors[0].clone();
        for sector in sectors.iter_mut().skip(1) {
            for d in 1..cfg.days {
                sector[d] += cfg.lead_lag * leader[d - 1];
            }
        }
    }

    (0..cfg.stocks)
        .map(|i| {
            let sector = i % cfg.sectors;
            let subsector = (i / cfg.sectors) % cfg.subsectors_per_sector.max(1);
            let b_mkt = range(&mut rng, cfg.beta_mkt);
            let b_sec = range(&mut rng, cfg.beta_sec);
            let base_volume = 1e6 * (0.5 + rng.random::<f64>());
            let mut close = Vec::with_capacity(cfg.days);
            let mut open = Vec::with_capacity(cfg.days);
            let mut high = Vec::with_capacity(cfg.days);
            let mut low = Vec::with_capacity(cfg.days);
            let mut volume = Vec::with_capacity(cfg.days);
            let mut prev = 100.0 * (0.5 * normal(&mut rng)).exp();
            let phi = cfg.idio_autocorr;
            let innov = cfg.idio_sigma * (1.0 - phi * phi).max(0.0).sqrt();
            let mut idio = 0.0;
            for d in 0..cfg.days {
                idio = phi * idio + innov * normal(&mut rng);
                let r = b_mkt * market[d] + b_sec * sectors[sector][d] + idio;
                let o = prev * (0.002 * normal(&mut rng)).exp();
                let c = prev * r.exp();
                let h = o.max(c) * (0.004 * normal(&mut rng).abs()).exp();
                let l = o.min(c) * (-0.004 * normal(&mut rng).abs()).exp();
                let v = base_volume * (0.3 * normal(&mut rng) + 20.0 * r.abs()).exp();
                open.push(o);
                high.push(h);
                low.push(l);
                close.push(c);
                volume.push(v);
                prev = c;
            }
            let mut centre = FUNDAMENTAL_CENTRES;
            for c in centre.iter_mut() {
                *c *= (0.3 * normal(&mut rng)).exp();
            }
            let mut level = centre;
            let mut fundamentals = BTreeMap::new();
            for d in (0..cfg.days).step_by(cfg.fundamentals_every.max(1)) {
                for (x, &mu) in level.iter_mut().zip(&centre) {
                    *x = mu + 0.9 * (*x - mu) + 0.1 * mu.abs() * normal(&mut rng);
                }
                fundamentals.insert(dates[d], level);
            }
            StockSeries {
                stock_id: format!("S{i:03}"),
                sector_id: sector as u16,
                subsector_id: subsector as u16,
                dates: dates.clone(),
                open,
                high,
                low,
                close,
                volume,
                fundamentals,
            }
        })
        .collect()
}
