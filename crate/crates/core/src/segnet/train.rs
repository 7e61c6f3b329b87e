//! Autoencoder training on per-pixel squared reconstruction error.

use rand::seq::SliceRandom;

use crate::autodiff::{Adam, Tape};
use crate::segnet::net::{SegNet, SegNetConfig};
use crate::segnet::{Result, SegNetError};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainConfig {
    /// Optimizer updates; batches cycle through reshuffled epochs.
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 10,
            learning_rate: 1e-3,
            clip: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeOutcome {
    pub net: SegNet,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

/// Trains a fresh network on `images` (each row-major `[m, n]`).
pub fn train_autoencoder(images: &[&[f64]], m: usize, net_cfg: &SegNetConfig, cfg: &AeTrainConfig) -> Result<AeOutcome> {
    if images.is_empty() {
        return Err(SegNetError::Empty("training image set"));
    }
    if cfg.batch_size == 0 || m == 0 {
        return Err(SegNetError::Config("batch_size and m must be positive".into()));
    }
    let n = images[0].len() / m;
    let mut init = seeds::stream(cfg.seed, "init");
    let mut shuffle = seeds::stream(cfg.seed, "shuffle");
    let mut net = SegNet::new(net_cfg.clone(), n, &mut init)?;
    let mut adam = Adam::with_learning_rate(&net.store, cfg.learning_rate);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cursor >= order.len() {
            order.shuffle(&mut shuffle);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let batch: Vec<&[f64]> = order[cursor..end].iter().map(|&i| images[i]).collect();
        cursor = end;
        let mut tape = Tape::new();
        let loss = net.batch_loss(&mut tape, &batch, m)?;
        let lv = tape.item(loss);
        if !lv.is_finite() {
            return Err(SegNetError::NonFinite { step });
        }
        losses.push(lv);
        net.store.zero_grad();
        tape.backward_into(loss, &mut net.store)?;
        net.store.clip_grad_norm(cfg.clip);
        adam.step(&mut net.store)?;
    }
    Ok(AeOutcome { net, losses })
}

/// Mean per-pixel squared reconstruction error over `images`.
pub fn reconstruction_mse(net: &SegNet, images: &[&[f64]], m: usize) -> Result<f64> {
    if images.is_empty() {
        return Err(SegNetError::Empty("evaluation image set"));
    }
    let mut sum = 0.0;
    let mut count = 0;
    for img in images {
        let rec = net.reconstruct(img, m)?;
        sum += rec.iter().zip(img.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += img.len();
    }
    Ok(sum / count as f64)
}
