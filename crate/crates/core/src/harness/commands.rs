//! The `mktcube` subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::autodiff::Checkpoint;
use crate::harness::{ExperimentConfig, HarnessError};
use crate::marketdata::csv_io::{read_rows, read_series_dir, write_rows, write_series_dir};
use crate::marketdata::split::SplitSpec;
use crate::marketdata::{synth_market_with, Dataset, DatasetConfig, FillMode, Partition, SynthConfig, INDICATOR_NAMES};
use crate::models::{evaluate, train, EpochMetric, Model, ModelKind, NetConfig, SvrConfig, TrainConfig};
use crate::segnet::compare::read_embeddings;
use crate::segnet::{
    compare, reconstruction_mse, train_autoencoder, write_embeddings, AeTrainConfig, CompareRow, SegNet, SegNetConfig,
};
use crate::seeds;

type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    BuildImages,
    Train,
    Evaluate,
    Embed,
    ComparePca,
    Benchmark,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Synth,
        Command::BuildImages,
        Command::Train,
        Command::Evaluate,
        Command::Embed,
        Command::ComparePca,
        Command::Benchmark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::BuildImages => "build-images",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Embed => "embed",
            Command::ComparePca => "compare-pca",
            Command::Benchmark => "benchmark",
        }
    }
}

impl FromStr for Command {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| HarnessError::Config {
                key: "command".into(),
                message: format!("unknown command {s:?}"),
            })
    }
}

/// Summary of one command run. Everything except `wall_clock_secs` is a
/// deterministic function of the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub metrics: Vec<EpochMetric>,
    /// Named final results, e.g. `("backtest_mse", 0.93)`.
    pub results: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command.as_str());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "wall_clock_secs = {:.3}", self.wall_clock_secs);
        for (k, v) in &self.results {
            let _ = writeln!(s, "result.{k} = {v}");
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {}", p.display());
        }
        for m in &self.metrics {
            let _ = writeln!(s, "metric.{}.{} = {}", m.epoch, m.split, m.mse);
        }
        let _ = writeln!(s, "\n# resolved config");
        s.push_str(&self.config.to_string());
        s
    }
}

fn cfg_err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn synth_config(cfg: &ExperimentConfig) -> Result<SynthConfig> {
    let sc = SynthConfig {
        stocks: cfg.positive("synth.stocks")?,
        sectors: cfg.positive("synth.sectors")?,
        subsectors_per_sector: cfg.positive("synth.subsectors")?,
        days: cfg.positive("synth.days")?,
        market_sigma: cfg.get("synth.market_sigma")?,
        sector_sigma: cfg.get("synth.sector_sigma")?,
        idio_sigma: cfg.get("synth.idio_sigma")?,
        market_autocorr: cfg.get("synth.market_autocorr")?,
        sector_autocorr: cfg.get("synth.sector_autocorr")?,
        idio_autocorr: cfg.get("synth.idio_autocorr")?,
        cross_coupling: cfg.get("synth.cross_coupling")?,
        lead_lag: cfg.get("synth.lead_lag")?,
        fundamentals_every: cfg.positive("synth.fundamentals_every")?,
        ..SynthConfig::default()
    };
    if sc.stocks < sc.sectors {
        return Err(cfg_err("synth.stocks", "must be at least synth.sectors"));
    }
    for key in ["synth.market_autocorr", "synth.sector_autocorr", "synth.idio_autocorr"] {
        let v: f64 = cfg.get(key)?;
        if !(v.abs() < 1.0) {
            return Err(cfg_err(key, "must lie in (-1, 1)"));
        }
    }
    Ok(sc)
}

pub fn dataset_config(cfg: &ExperimentConfig) -> Result<DatasetConfig> {
    let indicators = match cfg.raw("indicators") {
        "all" => INDICATOR_NAMES.iter().map(|s| s.to_string()).collect(),
        _ => cfg.list::<String>("indicators")?,
    };
    let split = match (cfg.optional("split.validation_start"), cfg.optional("split.backtest_start")) {
        (Some(v), Some(b)) => SplitSpec::Boundaries {
            validation_start: v
                .parse::<NaiveDate>()
                .map_err(|_| cfg_err("split.validation_start", "expected YYYY-MM-DD"))?,
            backtest_start: b
                .parse::<NaiveDate>()
                .map_err(|_| cfg_err("split.backtest_start", "expected YYYY-MM-DD"))?,
        },
        (None, None) => SplitSpec::Proportions {
            train: cfg.get("split.train")?,
            validation: cfg.get("split.validation")?,
        },
        _ => return Err(cfg_err("split.backtest_start", "set both boundary dates or neither")),
    };
    let horizons: Vec<usize> = cfg.list("horizons")?;
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(cfg_err("horizons", "need positive horizons"));
    }
    Ok(DatasetConfig {
        indicators,
        fill: cfg
            .raw("fill")
            .parse::<FillMode>()
            .map_err(|e| cfg_err("fill", e.to_string()))?,
        split,
        horizons,
        lookback: cfg.positive("lookback")?,
        ..DatasetConfig::default()
    })
}

pub fn train_config(cfg: &ExperimentConfig) -> Result<TrainConfig> {
    let mut net = NetConfig::new(ModelKind::Ma, 1, 1, 1);
    net.kernels = cfg.positive("ma.kernels")?;
    net.embedding = cfg.positive("ma.embedding")?;
    net.attention = cfg.positive("ma.attention")?;
    net.market = cfg.positive("ma.market")?;
    net.ma_hidden = cfg.positive("ma.hidden")?;
    net.lstm = cfg.positive("marnn.lstm")?;
    net.stock = cfg.positive("marnn.stock")?;
    net.fused = cfg.positive("marnn.fused")?;
    net.fused_hidden = cfg.positive("marnn.fused_hidden")?;
    net.ffnn_hidden = cfg.positive("ffnn.hidden")?;
    net.lstm_rnn_cell = cfg.positive("lstm_rnn.cell")?;
    net.init_bound = cfg.get("init_bound")?;
    let learning_rate: f64 = cfg.get("learning_rate")?;
    if !(learning_rate >= 0.0) {
        return Err(cfg_err("learning_rate", "must be non-negative"));
    }
    Ok(TrainConfig {
        horizon: cfg.positive("horizon")?,
        batch_size: cfg.positive("batch_size")?,
        learning_rate,
        clip: cfg.get("clip")?,
        epochs: cfg.positive("epochs")?,
        patience: cfg.positive("patience")?,
        seed: cfg.get("seed")?,
        svr: SvrConfig {
            epsilon: cfg.get("svr.epsilon")?,
            c: cfg.get("svr.c")?,
            iterations: cfg.positive("svr.iterations")?,
        },
        lr_ridge: cfg.get("lr.ridge")?,
        net,
    })
}

pub fn segnet_config(cfg: &ExperimentConfig, embedding_dim: usize) -> Result<SegNetConfig> {
    Ok(SegNetConfig {
        channels: cfg.list("segnet.channels")?,
        kernel: cfg.positive("segnet.kernel")?,
        window: cfg.positive("segnet.window")?,
        grid: cfg.positive("segnet.grid")?,
        embedding_dim,
        init_bound: cfg.get("init_bound")?,
    })
}

pub fn ae_config(cfg: &ExperimentConfig) -> Result<AeTrainConfig> {
    Ok(AeTrainConfig {
        steps: cfg.positive("segnet.steps")?,
        batch_size: cfg.positive("batch_size")?,
        learning_rate: cfg.get("learning_rate")?,
        clip: cfg.get("clip")?,
        seed: cfg.get("seed")?,
    })
}

enum Target {
    Returns(ModelKind),
    SegNet,
}

fn target(cfg: &ExperimentConfig) -> Result<Target> {
    match cfg.raw("model") {
        "segnet" => Ok(Target::SegNet),
        other => other
            .parse()
            .map(Target::Returns)
            .map_err(|_| cfg_err("model", format!("unknown model {other:?}"))),
    }
}

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.path("out_dir").join(name)
}

fn run_tag(cfg: &ExperimentConfig) -> Result<String> {
    Ok(match target(cfg)? {
        Target::SegNet => format!("segnet_k{}", cfg.positive("embedding_dim")?),
        Target::Returns(k) => format!("{k}_h{}", cfg.positive("horizon")?),
    })
}

fn checkpoint_path(cfg: &ExperimentConfig) -> Result<PathBuf> {
    Ok(match cfg.optional("checkpoint") {
        Some(p) => PathBuf::from(p),
        None => out_path(cfg, &format!("{}.ckpt", run_tag(cfg)?)),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.to_path_buf()));
    }
    Ok(Checkpoint::load(path)?)
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    Ok(Dataset::load(&cfg.path("images_dir"), cfg.positive("lookback")?)?)
}

/// Writes rows and reads them back, failing if the file does not re-parse
/// to the same values.
fn write_checked<T: Serialize + DeserializeOwned + PartialEq>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(path, rows)?;
    let back: Vec<T> = read_rows(path)?;
    if back != rows {
        return Err(HarnessError::Io(format!("{} does not re-parse to the written rows", path.display())));
    }
    Ok(())
}

/// Table of one row per model and one column per horizon.
pub fn write_table(path: &Path, horizons: &[usize], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let table_err = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io(format!("{}: {e}", parent.display())))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(table_err)?;
    let mut header = vec!["model".to_string()];
    header.extend(horizons.iter().map(|h| format!("h{h}")));
    w.write_record(&header).map_err(table_err)?;
    for (name, vals) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(vals.iter().map(f64::to_string));
        w.write_record(&rec).map_err(table_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    if read_table(path)?.1 != rows {
        return Err(HarnessError::Io(format!("{} does not re-parse", path.display())));
    }
    Ok(())
}

/// Reads a table written by [`write_table`]: horizons and rows.
pub fn read_table(path: &Path) -> Result<(Vec<usize>, Vec<(String, Vec<f64>)>)> {
    let table_err = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(table_err)?;
    let bad = || HarnessError::Io(format!("{}: malformed table", path.display()));
    let horizons = r
        .headers()
        .map_err(table_err)?
        .iter()
        .skip(1)
        .map(|h| h.strip_prefix('h').and_then(|v| v.parse().ok()).ok_or_else(bad))
        .collect::<Result<Vec<usize>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(table_err)?;
        let name = rec.get(0).ok_or_else(bad)?.to_string();
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.parse().map_err(|_| bad()))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((name, vals));
    }
    Ok((horizons, rows))
}

fn images(ds: &Dataset, part: Partition) -> Vec<&[f64]> {
    ds.split.range(part).map(|d| ds.image(d)).collect()
}

/// Runs `command` with a fully resolved configuration and writes its report
/// next to its outputs.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    log::debug!("resolved config for {}:\n{cfg}", command.as_str());
    let mut report = RunReport {
        command,
        config: cfg.clone(),
        seed: cfg.get("seed")?,
        metrics: Vec::new(),
        results: Vec::new(),
        outputs: Vec::new(),
        wall_clock_secs: 0.0,
    };
    match command {
        Command::Synth => cmd_synth(cfg, &mut report)?,
        Command::BuildImages => cmd_build_images(cfg, &mut report)?,
        Command::Train => cmd_train(cfg, &mut report)?,
        Command::Evaluate => cmd_evaluate(cfg, &mut report)?,
        Command::Embed => cmd_embed(cfg, &mut report)?,
        Command::ComparePca => cmd_compare_pca(cfg, &mut report)?,
        Command::Benchmark => cmd_benchmark(cfg, &mut report)?,
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    let path = out_path(cfg, &format!("report_{}.txt", command.as_str()));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&path, report.render()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(report)
}

fn cmd_synth(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let sc = synth_config(cfg)?;
    let series = synth_market_with(seeds::derive(report.seed, "data"), &sc);
    let dir = cfg.path("data_dir");
    write_series_dir(&dir, &series)?;
    report.results.push(("stocks".into(), series.len() as f64));
    report.outputs.push(dir);
    Ok(())
}

fn cmd_build_images(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let series = read_series_dir(&cfg.path("data_dir"))?;
    let ds = Dataset::build(&series, &dataset_config(cfg)?)?;
    let dir = cfg.path("images_dir");
    ds.save(&dir)?;
    for p in Partition::ALL {
        report
            .results
            .push((format!("{}_days", p.as_str()), ds.split.range(p).len() as f64));
    }
    if !ds.degenerate_columns.is_empty() {
        log::warn!("constant training columns: {}", ds.degenerate_columns.join(","));
    }
    report.outputs.push(dir);
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let tag = run_tag(cfg)?;
    let ck_path = checkpoint_path(cfg)?;
    let metrics_path = out_path(cfg, &format!("metrics_{tag}.csv"));
    match target(cfg)? {
        Target::Returns(kind) => {
            let tc = train_config(cfg)?;
            let out = train(kind, &ds, &tc)?;
            out.model
                .checkpoint()
                .with_meta("horizon", tc.horizon.to_string())
                .save(&ck_path)?;
            write_checked(&metrics_path, &out.metrics)?;
            if let Some(v) = out.best_validation {
                report.results.push(("validation_mse".into(), v));
            }
            report.results.push(("best_epoch".into(), out.best_epoch as f64));
            report.metrics = out.metrics;
        }
        Target::SegNet => {
            let k = cfg.positive("embedding_dim")?;
            let train_imgs = images(&ds, Partition::Train);
            let ac = ae_config(cfg)?;
            let out = train_autoencoder(&train_imgs, ds.m(), &segnet_config(cfg, k)?, &ac)?;
            out.net.checkpoint().save(&ck_path)?;
            let per_pass = train_imgs.len().div_ceil(ac.batch_size).max(1);
            let mut metrics: Vec<EpochMetric> = out
                .losses
                .chunks(per_pass)
                .enumerate()
                .map(|(i, c)| EpochMetric::new(i + 1, Partition::Train, c.iter().sum::<f64>() / c.len() as f64))
                .collect();
            let val = images(&ds, Partition::Validation);
            if !val.is_empty() {
                let v = reconstruction_mse(&out.net, &val, ds.m())?;
                metrics.push(EpochMetric::new(metrics.len(), Partition::Validation, v));
                report.results.push(("validation_mse".into(), v));
            }
            write_checked(&metrics_path, &metrics)?;
            report.metrics = metrics;
        }
    }
    report.outputs.push(ck_path);
    report.outputs.push(metrics_path);
    Ok(())
}

fn eval_split(cfg: &ExperimentConfig) -> Result<Partition> {
    Partition::parse(cfg.raw("evaluate.split"))
        .map_err(|_| cfg_err("evaluate.split", "expected train, validation or backtest"))
}

fn cmd_evaluate(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let ck = load_checkpoint(&checkpoint_path(cfg)?)?;
    let split = eval_split(cfg)?;
    let tag = run_tag(cfg)?;
    let metrics_path = out_path(cfg, &format!("evaluation_{tag}_{}.csv", split.as_str()));
    let mse = match target(cfg)? {
        Target::Returns(_) => {
            let model = Model::from_checkpoint(&ck)?;
            let horizon = cfg.positive("horizon")?;
            let ev = evaluate(&model, &ds, split, horizon)?;
            let pred_path = out_path(cfg, &format!("predictions_{tag}_{}.csv", split.as_str()));
            write_checked(&pred_path, &ev.predictions)?;
            report.outputs.push(pred_path);
            report.results.push(("invalid_labels".into(), ev.invalid as f64));
            ev.mse
        }
        Target::SegNet => {
            let net = SegNet::from_checkpoint(&ck)?;
            reconstruction_mse(&net, &images(&ds, split), ds.m())?
        }
    };
    let rows = vec![EpochMetric::new(0, split, mse)];
    write_checked(&metrics_path, &rows)?;
    report.results.push((format!("{}_mse", split.as_str()), mse));
    report.metrics = rows;
    report.outputs.push(metrics_path);
    Ok(())
}

fn cmd_embed(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let ck = load_checkpoint(&checkpoint_path(cfg)?)?;
    let net = SegNet::from_checkpoint(&ck)?;
    let mut embeddings = Vec::with_capacity(ds.num_dates());
    for d in 0..ds.num_dates() {
        embeddings.push(net.encode(ds.image(d), ds.m())?.embedding);
    }
    let path = out_path(cfg, &format!("embeddings_k{}.csv", net.embedding_dim()));
    write_embeddings(&path, &ds.dates, &embeddings)?;
    let (dates, back) = read_embeddings(&path)?;
    if dates != ds.dates || back != embeddings {
        return Err(HarnessError::Io(format!("{} does not re-parse", path.display())));
    }
    report.results.push(("images".into(), embeddings.len() as f64));
    report.outputs.push(path);
    Ok(())
}

fn cmd_compare_pca(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let dims: Vec<usize> = cfg.list("embedding_dims")?;
    if dims.is_empty() {
        return Err(cfg_err("embedding_dims", "need at least one size"));
    }
    let rows: Vec<CompareRow> = compare(
        &images(&ds, Partition::Train),
        &images(&ds, Partition::Backtest),
        ds.m(),
        &dims,
        &segnet_config(cfg, dims[0])?,
        &ae_config(cfg)?,
    )?;
    let path = out_path(cfg, "compare_pca.csv");
    write_checked(&path, &rows)?;
    for r in &rows {
        report.results.push((format!("segnet_k{}", r.embedding_dim), r.segnet_mse));
        report.results.push((format!("pca_k{}", r.embedding_dim), r.pca_mse));
    }
    report.outputs.push(path);
    Ok(())
}

fn cmd_benchmark(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let horizons: Vec<usize> = cfg.list("horizons")?;
    let models: Vec<ModelKind> = cfg
        .list::<String>("models")?
        .iter()
        .map(|m| m.parse().map_err(|_| cfg_err("models", format!("unknown model {m:?}"))))
        .collect::<Result<_>>()?;
    let base = train_config(cfg)?;
    let mut test_rows = Vec::new();
    let mut val_rows = Vec::new();
    for kind in models {
        let mut test = Vec::new();
        let mut val = Vec::new();
        for &h in &horizons {
            let tc = TrainConfig { horizon: h, ..base.clone() };
            let out = train(kind, &ds, &tc)?;
            let ev = evaluate(&out.model, &ds, Partition::Backtest, h)?;
            log::info!("{kind} h={h}: validation {:?} backtest {}", out.best_validation, ev.mse);
            val.push(out.best_validation.unwrap_or(f64::NAN));
            test.push(ev.mse);
            report.results.push((format!("{kind}_h{h}"), ev.mse));
        }
        test_rows.push((kind.to_string(), test));
        val_rows.push((kind.to_string(), val));
    }
    let test_path = out_path(cfg, "benchmark.csv");
    let val_path = out_path(cfg, "benchmark_validation.csv");
    write_table(&test_path, &horizons, &test_rows)?;
    write_table(&val_path, &horizons, &val_rows)?;
    report.outputs.push(test_path);
    report.outputs.push(val_path);
    Ok(())
}
