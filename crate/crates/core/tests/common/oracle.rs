//! Textbook indicator formulas, written without reference to the pipeline.
//! Recursive smoothers are expanded into explicit weighted sums.

use mktcube::marketdata::StockSeries;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64], ddof: usize) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - ddof) as f64
}

/// `decay^(k-s) * seed + weight * sum_{i=s+1..=k} decay^(k-i) x_i`.
fn expanded(x: &[f64], s: usize, seed: f64, k: usize, decay: f64, weight: f64) -> f64 {
    let mut acc = decay.powi((k - s) as i32) * seed;
    for i in s + 1..=k {
        acc += weight * decay.powi((k - i) as i32) * x[i];
    }
    acc
}

/// EMA of `x[first..]` seeded by the mean of its first `p` values.
fn ema_at(x: &[f64], first: usize, p: usize, k: usize) -> Option<f64> {
    let s = first + p - 1;
    if k < s {
        return None;
    }
    let a = 2.0 / (p as f64 + 1.0);
    Some(expanded(x, s, mean(&x[first..=s]), k, 1.0 - a, a))
}

fn wilder_avg(x: &[f64], p: usize, k: usize) -> f64 {
    // x[0] unused; seed is the mean of x[1..=p]
    let seed = mean(&x[1..=p]);
    let d = 1.0 - 1.0 / p as f64;
    expanded(x, p, seed, k, d, 1.0 / p as f64)
}

fn wilder_sum(x: &[f64], p: usize, k: usize) -> f64 {
    let seed: f64 = x[1..=p].iter().sum();
    expanded(x, p, seed, k, 1.0 - 1.0 / p as f64, 1.0)
}

/// Oracle rows for every day, in manifest column order.
pub fn rows(s: &StockSeries) -> Vec<Option<Vec<f64>>> {
    let n = s.close.len();
    let (tr, pdm, mdm) = directional(s);
    let di = |i: usize| {
        let t = wilder_sum(&tr, 14, i);
        (100.0 * wilder_sum(&pdm, 14, i) / t, 100.0 * wilder_sum(&mdm, 14, i) / t)
    };
    let dx: Vec<f64> = (0..n)
        .map(|i| {
            if i < 14 {
                0.0
            } else {
                let (p, m) = di(i);
                100.0 * (p - m).abs() / (p + m)
            }
        })
        .collect();
    let c = &s.close;
    let line: Vec<f64> = (0..n)
        .map(|i| match (ema_at(c, 0, 12, i), ema_at(c, 0, 26, i)) {
            (Some(a), Some(b)) => a - b,
            _ => f64::NAN,
        })
        .collect();
    (0..n).map(|k| row(s, k, &di, &dx, &line)).collect()
}

fn directional(s: &StockSeries) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (h, l, c) = (&s.high, &s.low, &s.close);
    let n = c.len();
    let mut tr = vec![0.0; n];
    let mut pdm = vec![0.0; n];
    let mut mdm = vec![0.0; n];
    for i in 1..n {
        let upm = h[i] - h[i - 1];
        let dnm = l[i - 1] - l[i];
        pdm[i] = if upm > dnm && upm > 0.0 { upm } else { 0.0 };
        mdm[i] = if dnm > upm && dnm > 0.0 { dnm } else { 0.0 };
        tr[i] = (h[i] - l[i]).max((h[i] - c[i - 1]).abs()).max((l[i] - c[i - 1]).abs());
    }
    (tr, pdm, mdm)
}

fn row(s: &StockSeries, k: usize, di: &dyn Fn(usize) -> (f64, f64), dx: &[f64], line: &[f64]) -> Option<Vec<f64>> {
    let (o, h, l, c, v) = (&s.open, &s.high, &s.low, &s.close, &s.volume);
    if k < 33 {
        return None;
    }
    let ret = |i: usize| c[i] / c[i - 1] - 1.0;
    let mut r = vec![c[k] / o[k], h[k] / o[k], l[k] / o[k], c[k] / h[k], c[k] / l[k], h[k] / l[k]];
    for lag in 1..=5 {
        r.push(ret(k + 1 - lag));
    }
    for span in [5, 10, 15, 20, 25, 30] {
        r.push(c[k] / c[k - span] - 1.0);
    }

    // Bollinger(20, 2), population deviation
    let w = &c[k - 19..=k];
    let (mu, sd) = (mean(w), var(w, 0).sqrt());
    let (up, lo) = (mu + 2.0 * sd, mu - 2.0 * sd);
    r.push((c[k] - lo) / (up - lo));
    r.push((up - lo) / mu);

    // DMI(14)
    let (pdi, mdi) = di(k);
    let adx_seed = mean(&dx[14..=27]);
    let adx = expanded(dx, 27, adx_seed, k, 13.0 / 14.0, 1.0 / 14.0);
    r.extend([pdi, mdi, adx]);

    // RSI(14), Wilder averages of gains and losses
    let n = c.len();
    let mut gains = vec![0.0; n];
    let mut losses = vec![0.0; n];
    for i in 1..n {
        gains[i] = (c[i] - c[i - 1]).max(0.0);
        losses[i] = (c[i - 1] - c[i]).max(0.0);
    }
    let (g, lo) = (wilder_avg(&gains, 14, k), wilder_avg(&losses, 14, k));
    r.push(100.0 * g / (g + lo));

    // MACD(12, 26, 9) scaled by close
    let ml = line[k];
    let sig = ema_at(line, 25, 9, k)?;
    r.extend([ml / c[k], sig / c[k], (ml - sig) / c[k]]);

    r.push(100.0 * (c[k] / c[k - 10] - 1.0));
    r.push(c[k] - c[k - 10]);

    let (_, f) = s.fundamentals.range(..=s.dates[k]).next_back()?;
    r.extend(f.iter().copied());

    r.push(v[k] / mean(&v[k - 19..=k]));
    let rets: Vec<f64> = (k - 29..=k).map(ret).collect();
    r.push(var(&rets[20..], 1).sqrt());
    r.push(var(&rets, 1).sqrt());
    r.push(c[k] / mean(&c[k - 9..=k]));
    r.push(c[k] / mean(&c[k - 29..=k]));
    Some(r)
}

/// Largest scaled difference `|a - b| / max(|b|, 1)` between the pipeline
/// and the oracle on one synthetic stock, plus the number of days compared.
pub fn compare(seed: u64, days: usize) -> Result<(f64, usize), String> {
    use mktcube::marketdata::{compute_indicators, synth_market_with, FillMode, IndicatorParams, SynthConfig};
    let cfg = SynthConfig { stocks: 1, sectors: 1, days, ..SynthConfig::default() };
    let s = &synth_market_with(seed, &cfg)[0];
    let table = compute_indicators(s, &IndicatorParams::default(), FillMode::CarryForward).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (k, (row, want)) in table.rows.iter().zip(rows(s)).enumerate() {
        match (row, want) {
            (Some(a), Some(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    worst = worst.max((x - y).abs() / y.abs().max(1.0));
                }
                compared += 1;
            }
            (None, None) => {}
            _ => return Err(format!("availability differs on day {k}")),
        }
    }
    Ok((worst, compared))
}
