//! SegNet versus PCA reconstruction error across embedding sizes, and the
//! embedding/comparison CSV formats.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::marketdata::csv_io::{read_rows, write_rows};
use crate::marketdata::DataError;
use crate::segnet::net::SegNetConfig;
use crate::segnet::pca::pca_fit;
use crate::segnet::train::{reconstruction_mse, train_autoencoder, AeTrainConfig};
use crate::segnet::{Result, SegNetError};

pub const EMBEDDING_DIMS: [usize; 4] = [16, 32, 64, 128];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub embedding_dim: usize,
    pub segnet_mse: f64,
    pub pca_mse: f64,
}

/// Fits PCA and trains one network per embedding size on `train`, then
/// scores both on `test` by mean per-pixel squared error.
pub fn compare(
    train: &[&[f64]],
    test: &[&[f64]],
    m: usize,
    dims: &[usize],
    net_cfg: &SegNetConfig,
    cfg: &AeTrainConfig,
) -> Result<Vec<CompareRow>> {
    if test.is_empty() {
        return Err(SegNetError::Empty("test image set"));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &k in dims {
        let pca = pca_fit(train, k)?;
        let pca_mse = pca.reconstruction_mse(test);
        let nc = SegNetConfig {
            embedding_dim: k,
            ..net_cfg.clone()
        };
        let out = train_autoencoder(train, m, &nc, cfg)?;
        let segnet_mse = reconstruction_mse(&out.net, test, m)?;
        log::info!("k={k}: segnet {segnet_mse:.6e} pca {pca_mse:.6e}");
        rows.push(CompareRow {
            embedding_dim: k,
            segnet_mse,
            pca_mse,
        });
    }
    Ok(rows)
}

pub fn write_comparison(path: &Path, rows: &[CompareRow]) -> Result<()> {
    Ok(write_rows(path, rows)?)
}

pub fn read_comparison(path: &Path) -> Result<Vec<CompareRow>> {
    Ok(read_rows(path)?)
}

/// `date,dim_0..dim_{k-1}`.
pub fn write_embeddings(path: &Path, dates: &[NaiveDate], embeddings: &[Vec<f64>]) -> Result<()> {
    let k = embeddings.first().map_or(0, Vec::len);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, e))?;
    let mut header = vec!["date".to_string()];
    header.extend((0..k).map(|i| format!("dim_{i}")));
    w.write_record(&header).map_err(|e| DataError::csv(path, e))?;
    for (d, e) in dates.iter().zip(embeddings) {
        let mut rec = vec![d.to_string()];
        rec.extend(e.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// Reads an embedding CSV back into dates and vectors.
pub fn read_embeddings(path: &Path) -> Result<(Vec<NaiveDate>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => DataError::MissingInput(path.to_path_buf()),
        _ => DataError::csv(path, e),
    })?;
    let mut dates = Vec::new();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| DataError::csv(path, e))?;
        let bad = |what: &str| DataError::Parse(format!("{}: bad {what}", path.display()));
        dates.push(rec.get(0).and_then(|d| d.parse().ok()).ok_or_else(|| bad("date"))?);
        out.push(
            rec.iter()
                .skip(1)
                .map(|v| v.parse().map_err(|_| bad("value")))
                .collect::<Result<Vec<f64>, DataError>>()?,
        );
    }
    Ok((dates, out))
}
