//! Plain-text `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::harness::HarnessError;

/// Every accepted key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("data_dir", "data"),
    ("images_dir", "out/images"),
    ("out_dir", "out"),
    ("checkpoint", ""),
    ("synth.stocks", "20"),
    ("synth.sectors", "4"),
    ("synth.subsectors", "2"),
    ("synth.days", "600"),
    ("synth.market_sigma", "0.01"),
    ("synth.sector_sigma", "0.01"),
    ("synth.idio_sigma", "0.005"),
    ("synth.market_autocorr", "0"),
    ("synth.sector_autocorr", "0"),
    ("synth.idio_autocorr", "0"),
    ("synth.cross_coupling", "0"),
    ("synth.lead_lag", "0"),
    ("synth.fundamentals_every", "63"),
    ("fill", "carry-forward"),
    ("indicators", "all"),
    ("split.train", "0.721866"),
    ("split.validation", "0.166704"),
    ("split.validation_start", ""),
    ("split.backtest_start", ""),
    ("lookback", "10"),
    ("model", "ma"),
    ("models", "lr,svr,ffnn,lstm-rnn,ma,ma-rnn"),
    ("horizon", "1"),
    ("horizons", "1,5,15,30"),
    ("epochs", "100"),
    ("patience", "10"),
    ("batch_size", "10"),
    ("learning_rate", "0.001"),
    ("clip", "5"),
    ("init_bound", "0.1"),
    ("ma.kernels", "192"),
    ("ma.embedding", "100"),
    ("ma.attention", "32"),
    ("ma.market", "40"),
    ("ma.hidden", "50"),
    ("marnn.lstm", "32"),
    ("marnn.stock", "40"),
    ("marnn.fused", "100"),
    ("marnn.fused_hidden", "50"),
    ("ffnn.hidden", "50"),
    ("lstm_rnn.cell", "25"),
    ("lr.ridge", "1e-8"),
    ("svr.epsilon", "0.1"),
    ("svr.c", "0.3"),
    ("svr.iterations", "2000"),
    ("evaluate.split", "backtest"),
    ("embedding_dim", "32"),
    ("embedding_dims", "16,32,64,128"),
    ("segnet.channels", "16,32,64"),
    ("segnet.kernel", "3"),
    ("segnet.window", "2"),
    ("segnet.grid", "32"),
    ("segnet.steps", "3000"),
];

/// Resolved configuration: defaults, then file values, then overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                HarnessError::MissingInput(path.to_path_buf())
            } else {
                HarnessError::Io(format!("{}: {e}", path.display()))
            }
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(config_err(key, "unknown key")),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), HarnessError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_err(kv, "override must be key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{key} is not a configuration key"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, HarnessError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| config_err(key, format!("cannot parse {v:?}")))
    }

    pub fn positive(&self, key: &str) -> Result<usize, HarnessError> {
        match self.get::<usize>(key)? {
            0 => Err(config_err(key, "must be positive")),
            v => Ok(v),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, HarnessError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| config_err(key, format!("cannot parse list item {s:?}")))
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    pub fn optional(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
