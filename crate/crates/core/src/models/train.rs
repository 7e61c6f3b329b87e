//! Mini-batch training with Adam, global-norm clipping and early stopping
//! on validation MSE.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Adam, Checkpoint, ParamStore, Tape};
use crate::marketdata::{Dataset, Partition, Sample};
use crate::models::eval::{mse, EpochMetric};
use crate::models::linear::{fit_lr, fit_svr, LinearModel, SvrConfig, LR_RIDGE};
use crate::models::net::{Example, NetConfig, NeuralNet};
use crate::models::{ModelError, ModelKind, Result};
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub svr: SvrConfig,
    pub lr_ridge: f64,
    /// Layer sizes; `kind`, `t`, `m` and `n` are filled in from the dataset.
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 1,
            batch_size: 10,
            learning_rate: 1e-3,
            clip: 5.0,
            epochs: 100,
            patience: 10,
            seed: 0,
            svr: SvrConfig::default(),
            lr_ridge: LR_RIDGE,
            net: NetConfig::new(ModelKind::Ma, 10, 1, 1),
        }
    }
}

/// A trained model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear {
        kind: ModelKind,
        model: LinearModel,
        t: usize,
        n: usize,
    },
    Neural(NeuralNet),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Linear { kind, .. } => *kind,
            Model::Neural(net) => net.kind(),
        }
    }

    pub fn predict(&self, ds: &Dataset, samples: &[Sample]) -> Result<Vec<f64>> {
        match self {
            Model::Linear { model, t, n, .. } => {
                if *t != ds.lookback || *n != ds.n() {
                    return Err(ModelError::HistoryLength {
                        expected: t * n,
                        got: ds.lookback * ds.n(),
                    });
                }
                let x = design_matrix(ds, samples)?;
                Ok(model.predict(&x))
            }
            Model::Neural(net) => {
                let hist = histories(ds, samples)?;
                let ex = examples(ds, net.kind(), samples, &hist)?;
                net.predict(&ex)
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Model::Linear { kind, model, t, n } => {
                let mut store = ParamStore::new();
                store.add("linear.w", crate::Tensor::vector(model.weights.clone()));
                store.add("linear.b", crate::Tensor::scalar(model.intercept));
                Checkpoint::from_store(&store, None)
                    .with_meta("model", kind.as_str())
                    .with_meta("net.t", t.to_string())
                    .with_meta("net.n", n.to_string())
            }
            Model::Neural(net) => net.checkpoint(None),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind: ModelKind = ck
            .meta("model")
            .ok_or_else(|| ModelError::Config("checkpoint lacks model".into()))?
            .parse()?;
        if kind.is_neural() {
            return Ok(Model::Neural(NeuralNet::from_checkpoint(ck)?));
        }
        let num = |k: &str| -> Result<usize> {
            ck.meta(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ModelError::Config(format!("checkpoint lacks {k}")))
        };
        let w = ck
            .param("linear.w")
            .ok_or_else(|| ModelError::Config("checkpoint lacks linear.w".into()))?;
        let b = ck
            .param("linear.b")
            .ok_or_else(|| ModelError::Config("checkpoint lacks linear.b".into()))?;
        Ok(Model::Linear {
            kind,
            model: LinearModel {
                weights: w.data.clone(),
                intercept: b.data[0],
            },
            t: num("net.t")?,
            n: num("net.n")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<EpochMetric>,
    /// Epoch whose parameters were kept (1-based; 0 for closed-form fits).
    pub best_epoch: usize,
    pub best_validation: Option<f64>,
    pub steps: u64,
}

/// Row-major `[samples, t * n]` matrix of flattened stock histories.
pub fn design_matrix(ds: &Dataset, samples: &[Sample]) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(samples.len() * ds.lookback * ds.n());
    for s in samples {
        x.extend(ds.history(s.date, s.stock).ok_or(ModelError::Empty("lookback window"))?);
    }
    Ok(x)
}

fn histories(ds: &Dataset, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| ds.history(s.date, s.stock).ok_or(ModelError::Empty("lookback window")))
        .collect()
}

fn examples<'a>(ds: &'a Dataset, kind: ModelKind, samples: &[Sample], hist: &'a [Vec<f64>]) -> Result<Vec<Example<'a>>> {
    samples
        .iter()
        .zip(hist)
        .map(|(s, h)| {
            let cube = if kind.uses_market() {
                ds.cube(s.date).ok_or(ModelError::Empty("lookback window"))?
            } else {
                &[]
            };
            Ok(Example {
                key: s.date,
                cube,
                history: h,
                stock: s.stock,
            })
        })
        .collect()
}

/// Mini-batches for one epoch over a uniform shuffle of the samples.
fn batches<R: Rng>(samples: &[Sample], size: usize, rng: &mut R) -> Vec<Vec<Sample>> {
    let mut all = samples.to_vec();
    all.shuffle(rng);
    all.chunks(size).map(<[Sample]>::to_vec).collect()
}

/// Trains `kind` on the dataset's train partition, selecting on validation.
pub fn train(kind: ModelKind, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (train, _) = ds.samples(Partition::Train, cfg.horizon)?;
    let (val, _) = ds.samples(Partition::Validation, cfg.horizon)?;
    train_on(kind, ds, &train, &val, cfg)
}

/// Trains on explicit sample lists. With an empty validation list the
/// training loss drives model selection.
pub fn train_on(kind: ModelKind, ds: &Dataset, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(ModelError::Empty("training"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(ModelError::Config("batch_size and epochs must be positive".into()));
    }
    let labels: Vec<f64> = train.iter().map(|s| s.label).collect();
    let val_labels: Vec<f64> = val.iter().map(|s| s.label).collect();
    let (t, n) = (ds.lookback, ds.n());
    if !kind.is_neural() {
        let x = design_matrix(ds, train)?;
        let model = match kind {
            ModelKind::Lr => fit_lr(&x, &labels, t * n, cfg.lr_ridge)?,
            _ => fit_svr(&x, &labels, t * n, &cfg.svr)?,
        };
        let model = Model::Linear { kind, model, t, n };
        let train_mse = mse(&model.predict(ds, train)?, &labels);
        let mut metrics = vec![EpochMetric::new(1, Partition::Train, train_mse)];
        let mut best_validation = None;
        if !val.is_empty() {
            let v = mse(&model.predict(ds, val)?, &val_labels);
            metrics.push(EpochMetric::new(1, Partition::Validation, v));
            best_validation = Some(v);
        }
        return Ok(TrainOutcome {
            model,
            metrics,
            best_epoch: 0,
            best_validation,
            steps: 0,
        });
    }

    let mut net_cfg = cfg.net.clone();
    net_cfg.kind = kind;
    net_cfg.t = t;
    net_cfg.m = ds.m();
    net_cfg.n = n;
    let mut init = seeds::stream(cfg.seed, "init");
    let mut shuffle = seeds::stream(cfg.seed, "shuffle");
    let mut net = NeuralNet::new(net_cfg, ds.stock_order.clone(), &mut init)?;
    let mut adam = Adam::with_learning_rate(&net.store, cfg.learning_rate);
    let val_hist = histories(ds, val)?;
    let val_ex = examples(ds, kind, val, &val_hist)?;

    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<f64>)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut sq_sum = 0.0;
        for (bi, batch) in batches(train, cfg.batch_size, &mut shuffle)
            .iter()
            .enumerate()
        {
            let hist = histories(ds, batch)?;
            let ex = examples(ds, kind, batch, &hist)?;
            let mut tape = Tape::new();
            let (preds, _) = net.forward(&mut tape, &ex)?;
            let stacked = tape.concat(&preds)?;
            let target: Vec<f64> = batch.iter().map(|s| s.label).collect();
            let loss = tape.mse(stacked, &target)?;
            let lv = tape.item(loss);
            if !lv.is_finite() {
                let detail = batch
                    .iter()
                    .map(|s| format!("{}/{}", ds.dates[s.date], ds.stock_order[s.stock]))
                    .collect::<Vec<_>>()
                    .join(" ");
                return Err(ModelError::NonFinite { epoch, batch: bi, detail });
            }
            sq_sum += lv * batch.len() as f64;
            net.store.zero_grad();
            tape.backward_into(loss, &mut net.store)?;
            net.store.clip_grad_norm(cfg.clip);
            adam.step(&mut net.store)?;
        }
        let train_mse = sq_sum / train.len() as f64;
        metrics.push(EpochMetric::new(epoch, Partition::Train, train_mse));
        let score = if val.is_empty() {
            train_mse
        } else {
            let v = mse(&net.predict(&val_ex)?, &val_labels);
            metrics.push(EpochMetric::new(epoch, Partition::Validation, v));
            v
        };
        if !score.is_finite() {
            return Err(ModelError::NonFinite {
                epoch,
                batch: 0,
                detail: "validation predictions".into(),
            });
        }
        match &best {
            Some((b, _, _)) if score >= *b => stale += 1,
            _ => {
                best = Some((score, epoch, net.store.clone()));
                stale = 0;
            }
        }
        log::debug!("{kind} epoch {epoch}: train {train_mse:.6} select {score:.6}");
        if stale >= cfg.patience {
            break;
        }
    }
    let (score, best_epoch, store) = best.expect("at least one epoch ran");
    net.store = store;
    Ok(TrainOutcome {
        model: Model::Neural(net),
        metrics,
        best_epoch,
        best_validation: (!val.is_empty()).then_some(score),
        steps: adam.step_count(),
    })
}
