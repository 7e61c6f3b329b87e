//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "MKTC" | version u32
//! n_params u32, then per parameter:
//!     name_len u32 | name utf-8 | ndim u32 | dims u64 * ndim | data f64 * numel
//! optimizer flag u8 (0 = absent, 1 = Adam), then if present:
//!     step u64 | lr f64 | beta1 f64 | beta2 f64 | epsilon f64
//!     per parameter: first moment f64 * numel | second moment f64 * numel
//! n_meta u32, then per entry: key_len u32 | key | value_len u32 | value
//! ```

use std::io::Write;
use std::path::Path;

use crate::autodiff::optim::Adam;
use crate::autodiff::tensor::{numel, ParamStore, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"MKTC";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes at offset 0")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated checkpoint: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("corrupt checkpoint at offset {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("parameter {name} missing from checkpoint")]
    MissingParam { name: String },
    #[error("parameter {name} has shape {found:?}, model expects {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerBlob {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub params: Vec<NamedBlob>,
    pub optimizer: Option<OptimizerBlob>,
    pub metadata: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn from_store<T: Scalar>(store: &ParamStore<T>, optimizer: Option<&Adam<T>>) -> Self {
        let params = store
            .iter()
            .map(|(name, t)| NamedBlob {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|x| x.to_f64_lossy()).collect(),
            })
            .collect();
        let conv = |v: &[Vec<T>]| -> Vec<Vec<f64>> {
            v.iter()
                .map(|m| m.iter().map(|x| x.to_f64_lossy()).collect())
                .collect()
        };
        let optimizer = optimizer.map(|a| OptimizerBlob {
            step: a.step_count(),
            learning_rate: a.learning_rate.to_f64_lossy(),
            beta1: a.beta1.to_f64_lossy(),
            beta2: a.beta2.to_f64_lossy(),
            epsilon: a.epsilon.to_f64_lossy(),
            first_moment: conv(a.first_moment()),
            second_moment: conv(a.second_moment()),
        });
        Self {
            params,
            optimizer,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn param(&self, name: &str) -> Option<&NamedBlob> {
        self.params.iter().find(|b| b.name == name)
    }

    /// Copies every parameter of `store` out of the checkpoint, by name.
    pub fn restore_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let blob = self
                .param(&name)
                .ok_or_else(|| CheckpointError::MissingParam { name: name.clone() })?;
            let t = store.get_mut(id);
            if blob.shape != t.shape() {
                return Err(CheckpointError::ParamShape {
                    name,
                    expected: t.shape().to_vec(),
                    found: blob.shape.clone(),
                });
            }
            for (d, &s) in t.data_mut().iter_mut().zip(&blob.data) {
                *d = T::lit(s);
            }
        }
        Ok(())
    }

    pub fn adam<T: Scalar>(&self) -> Option<Adam<T>> {
        let o = self.optimizer.as_ref()?;
        let conv = |v: &[Vec<f64>]| -> Vec<Vec<T>> {
            v.iter().map(|m| m.iter().map(|&x| T::lit(x)).collect()).collect()
        };
        Adam::from_parts(
            [
                T::lit(o.learning_rate),
                T::lit(o.beta1),
                T::lit(o.beta2),
                T::lit(o.epsilon),
            ],
            o.step,
            conv(&o.first_moment),
            conv(&o.second_moment),
        )
        .ok()
    }

    /// Parameters as a tensor store, in file order.
    pub fn to_store(&self) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        for b in &self.params {
            let t = Tensor::new(b.shape.clone(), b.data.clone()).expect("validated on read");
            store.add(b.name.clone(), t);
        }
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for b in &self.params {
            put_str(&mut out, &b.name);
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f64s(&mut out, &b.data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                out.extend_from_slice(&o.step.to_le_bytes());
                for x in [o.learning_rate, o.beta1, o.beta2, o.epsilon] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                for (m, v) in o.first_moment.iter().zip(&o.second_moment) {
                    put_f64s(&mut out, m);
                    put_f64s(&mut out, v);
                }
            }
        }
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                let at = r.pos;
                let d = r.u64()? as usize;
                if d == 0 {
                    return Err(CheckpointError::Corrupt {
                        offset: at,
                        reason: "zero-length dimension".into(),
                    });
                }
                shape.push(d);
            }
            let data = r.f64s(numel(&shape))?;
            params.push(NamedBlob { name, shape, data });
        }
        let flag_at = r.pos;
        let optimizer = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let learning_rate = r.f64()?;
                let beta1 = r.f64()?;
                let beta2 = r.f64()?;
                let epsilon = r.f64()?;
                let mut first_moment = Vec::with_capacity(params.len());
                let mut second_moment = Vec::with_capacity(params.len());
                for p in &params {
                    first_moment.push(r.f64s(p.data.len())?);
                    second_moment.push(r.f64s(p.data.len())?);
                }
                Some(OptimizerBlob {
                    step,
                    learning_rate,
                    beta1,
                    beta2,
                    epsilon,
                    first_moment,
                    second_moment,
                })
            }
            other => {
                return Err(CheckpointError::Corrupt {
                    offset: flag_at,
                    reason: format!("unknown optimizer flag {other}"),
                })
            }
        };
        let n_meta = r.u32()? as usize;
        let mut metadata = Vec::with_capacity(n_meta.min(1 << 12));
        for _ in 0..n_meta {
            metadata.push((r.string()?, r.string()?));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt {
                offset: r.pos,
                reason: "trailing bytes".into(),
            });
        }
        Ok(Self {
            params,
            optimizer,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Bounds-checked little-endian cursor used by the binary readers.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32, CheckpointError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let needed = n.checked_mul(8).ok_or(CheckpointError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        let raw = self.take(needed)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::Corrupt {
            offset: at,
            reason: "invalid utf-8".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (ParamStore<f64>, Adam<f64>) {
        let mut store = ParamStore::new();
        store.add("w", Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, f64::MIN_POSITIVE, 1e300, -0.0]).unwrap());
        store.add("b", Tensor::vector(vec![std::f64::consts::PI]));
        let mut adam = Adam::new(&store);
        for t in store.tensors_mut() {
            let n = t.len();
            t.accumulate_grad(&vec![0.5; n]);
        }
        adam.step(&mut store).unwrap();
        (store, adam)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (store, adam) = sample();
        let ck = Checkpoint::from_store(&store, Some(&adam)).with_meta("model", "ma");
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"MKTC");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let mut restored = store.clone();
        restored.tensors_mut()[0].data_mut()[0] = 9.0;
        back.restore_into(&mut restored).unwrap();
        for ((_, a), (_, b)) in restored.iter().zip(store.iter()) {
            let bits = |t: &Tensor<f64>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.adam::<f64>().unwrap(), adam);
        assert_eq!(back.meta("model"), Some("ma"));
    }

    #[test]
    fn truncation_names_offset() {
        let (store, _) = sample();
        let bytes = Checkpoint::from_store(&store, None).to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Truncated { .. }), "{err}");
        assert!(err.to_string().contains("offset"));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let (store, _) = sample();
        let mut bytes = Checkpoint::from_store(&store, None).to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 9, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }
}
