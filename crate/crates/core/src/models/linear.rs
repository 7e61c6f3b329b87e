//! Linear baselines: ridge-stabilised least squares and linear
//! epsilon-insensitive support vector regression.

use nalgebra::{DMatrix, DVector};

use crate::models::{ModelError, Result};

/// `y = w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(p: usize) -> Self {
        Self {
            weights: vec![0.0; p],
            intercept: 0.0,
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Predictions for row-major `x` with `weights.len()` columns.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        x.chunks_exact(self.weights.len()).map(|r| self.predict_one(r)).collect()
    }
}

fn check(x: &[f64], y: &[f64], p: usize) -> Result<usize> {
    if y.is_empty() {
        return Err(ModelError::Empty("training"));
    }
    if p == 0 || x.len() != y.len() * p {
        return Err(ModelError::Config(format!(
            "design matrix has {} values, expected {} x {p}",
            x.len(),
            y.len()
        )));
    }
    Ok(y.len())
}

pub const LR_RIDGE: f64 = 1e-8;

/// Least squares with intercept. Solves the centered normal equations with
/// `ridge` added to the Gram diagonal.
pub fn fit_lr(x: &[f64], y: &[f64], p: usize, ridge: f64) -> Result<LinearModel> {
    let n = check(x, y, p)?;
    let xm = DMatrix::from_row_slice(n, p, x);
    let means: Vec<f64> = (0..p).map(|j| xm.column(j).mean()).collect();
    let ymean = y.iter().sum::<f64>() / n as f64;
    let mut xc = xm;
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-means[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ymean));
    let mut gram = xc.tr_mul(&xc);
    for j in 0..p {
        gram[(j, j)] += ridge;
    }
    let rhs = xc.tr_mul(&yc);
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| ModelError::Config("singular normal equations".into()))?,
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = ymean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel { weights, intercept })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrConfig {
    pub epsilon: f64,
    pub c: f64,
    pub iterations: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            c: 0.3,
            iterations: 2000,
        }
    }
}

/// `||w||^2 / (2 C N) + mean(max(0, |y - w.x - b| - eps))`, the usual
/// `0.5 ||w||^2 + C sum(loss)` objective divided by `C N`.
pub fn svr_objective(model: &LinearModel, x: &[f64], y: &[f64], cfg: &SvrConfig) -> f64 {
    let n = y.len() as f64;
    let reg = model.weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * cfg.c * n);
    reg + svr_loss(model, x, y, cfg.epsilon)
}

/// Mean epsilon-insensitive loss.
pub fn svr_loss(model: &LinearModel, x: &[f64], y: &[f64], epsilon: f64) -> f64 {
    let p = model.weights.len();
    x.chunks_exact(p)
        .zip(y)
        .map(|(r, &t)| ((t - model.predict_one(r)).abs() - epsilon).max(0.0))
        .sum::<f64>()
        / y.len() as f64
}

/// Full-batch subgradient descent from zero with step `eta0 / sqrt(k + 1)`,
/// returning the iterate with the lowest objective seen.
pub fn fit_svr(x: &[f64], y: &[f64], p: usize, cfg: &SvrConfig) -> Result<LinearModel> {
    let n = check(x, y, p)?;
    if cfg.c <= 0.0 || cfg.epsilon < 0.0 {
        return Err(ModelError::Config("svr needs c > 0 and epsilon >= 0".into()));
    }
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n as f64 + 1.0;
    let eta0 = 1.0 / mean_sq.sqrt();
    let mut model = LinearModel::zeros(p);
    let mut best = model.clone();
    let mut best_obj = svr_objective(&model, x, y, cfg);
    let mut gw = vec![0.0; p];
    for k in 0..cfg.iterations {
        let inv_cn = 1.0 / (cfg.c * n as f64);
        for (g, w) in gw.iter_mut().zip(&model.weights) {
            *g = w * inv_cn;
        }
        let mut gb = 0.0;
        for (r, &t) in x.chunks_exact(p).zip(y) {
            let resid = t - model.predict_one(r);
            if resid.abs() <= cfg.epsilon {
                continue;
            }
            let s = resid.signum() / n as f64;
            for (g, &xv) in gw.iter_mut().zip(r) {
                *g -= s * xv;
            }
            gb -= s;
        }
        let eta = eta0 / ((k + 1) as f64).sqrt();
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= eta * g;
        }
        model.intercept -= eta * gb;
        let obj = svr_objective(&model, x, y, cfg);
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&model);
        }
    }
    Ok(best)
}
