#![allow(dead_code)]

pub mod fd_suite;
pub mod invariants;
pub mod oracle;

use mktcube::autodiff::{ParamStore, Tape, Var};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Compares backward gradients of `loss` with respect to every stored
/// parameter against central differences.
pub fn check_store<F>(store: &mut ParamStore<f64>, loss: F) -> FdReport
where
    F: Fn(&ParamStore<f64>, &mut Tape<f64>) -> Var,
{
    let mut tape = Tape::new();
    let l = loss(store, &mut tape);
    store.zero_grad();
    tape.backward_into(l, store).unwrap();
    let ids: Vec<_> = store.ids().collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            let t = store.get(id);
            t.grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();
    let eval = |store: &ParamStore<f64>| {
        let mut tape = Tape::new();
        let l = loss(store, &mut tape);
        tape.item(l)
    };
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (pi, &id) in ids.iter().enumerate() {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + FD_STEP;
            let up = eval(store);
            store.get_mut(id).data_mut()[i] = orig - FD_STEP;
            let down = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let e = rel_err(analytic[pi][i], numeric);
            if e > max_rel {
                max_rel = e;
            }
            checked += 1;
        }
    }
    FdReport { max_rel, checked }
}

/// Deterministic pseudo-random values in `[lo, hi)`.
pub fn values(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Small synthetic dataset with the full indicator manifest.
pub fn small_dataset(seed: u64, stocks: usize, days: usize) -> mktcube::marketdata::Dataset {
    use mktcube::marketdata::{synth_market_with, Dataset, DatasetConfig, SynthConfig};
    let cfg = SynthConfig { stocks, sectors: 2, days, ..SynthConfig::default() };
    Dataset::build(&synth_market_with(seed, &cfg), &DatasetConfig::default()).unwrap()
}

/// Training settings with narrow layers so tests run quickly.
pub fn small_train_config(seed: u64) -> mktcube::models::TrainConfig {
    let mut c = mktcube::models::TrainConfig { seed, epochs: 5, ..Default::default() };
    let n = &mut c.net;
    n.kernels = 4;
    n.embedding = 8;
    n.attention = 4;
    n.market = 8;
    n.ma_hidden = 8;
    n.lstm = 8;
    n.stock = 8;
    n.fused = 16;
    n.fused_hidden = 8;
    n.ffnn_hidden = 16;
    n.lstm_rnn_cell = 8;
    c
}
