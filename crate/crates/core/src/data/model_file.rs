//! The `LFAM` model file.
//!
//! ```text
//! magic    4 bytes  "LFAM"
//! version  u32      1
//! entries  u32      number of key-value entries
//! per entry:
//!   key_len u16, key (UTF-8)
//!   tag     u8      1 = u64, 2 = f64, 3 = string, 4 = f64 array
//!   value   u64 | f64 | (u32 length, UTF-8 bytes) | (u64 length, length x f64)
//! ```
//!
//! All integers and floats are little-endian. Entries are written in a fixed
//! order; readers look them up by key and ignore keys they do not know.
//!
//! | key | type | meaning |
//! |-----|------|---------|
//! | `kind` | string | `bow`, `t1` or `t2` |
//! | `k`, `d`, `m` | u64 | codewords, descriptor dimension, classes |
//! | `gamma` | f64 | kernel scale |
//! | `map.enabled` | u64 | 1 when the chi-squared map is applied |
//! | `map.order`, `map.period`, `map.floor` | u64, f64, f64 | map parameters |
//! | `codebook`, `log_precisions` | f64 array | `K x D`, row-major |
//! | `weights`, `biases` | f64 array | `M x D_in` row-major, `M` |
//! | `config.*` | various | remaining training configuration |
//! | `metrics.*` | f64 array | per-epoch history; missing test accuracy is NaN |

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::container::Reader;
use super::FormatError;
use crate::classifier::{ClassifierParams, FeatureMapConfig};
use crate::encoders::AggregatorParams;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::trainer::{EpochMetrics, TrainedModel, TrainingConfig};

pub const MODEL_MAGIC: &[u8; 4] = b"LFAM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
enum Value {
    U64(u64),
    F64(f64),
    Str(String),
    Array(Vec<f64>),
}

struct Writer {
    entries: Vec<(String, Value)>,
}

impl Writer {
    fn put(&mut self, key: &str, v: Value) {
        self.entries.push((key.to_owned(), v));
    }

    fn u64(&mut self, key: &str, v: u64) {
        self.put(key, Value::U64(v));
    }

    fn f64(&mut self, key: &str, v: f64) {
        self.put(key, Value::F64(v));
    }

    fn str(&mut self, key: &str, v: &str) {
        self.put(key, Value::Str(v.to_owned()));
    }

    fn array(&mut self, key: &str, v: &[f64]) {
        self.put(key, Value::Array(v.to_vec()));
    }

    fn finish(self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, value) in self.entries {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            match value {
                Value::U64(v) => {
                    out.push(1);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Value::F64(v) => {
                    out.push(2);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Value::Str(s) => {
                    out.push(3);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
                Value::Array(a) => {
                    out.push(4);
                    out.extend_from_slice(&(a.len() as u64).to_le_bytes());
                    for v in a {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }
}

pub fn to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let p = &model.params;
    let c = &model.config;
    let mut w = Writer { entries: Vec::new() };
    w.str("kind", p.kind.as_str());
    w.u64("k", p.num_codewords() as u64);
    w.u64("d", p.dim() as u64);
    w.u64("m", model.num_classes() as u64);
    w.f64("gamma", p.gamma);
    w.u64("map.enabled", c.use_chi2_map as u64);
    w.u64("map.order", c.feature_map.order as u64);
    w.f64("map.period", c.feature_map.period);
    w.f64("map.floor", c.feature_map.floor);
    w.array("codebook", p.codebook.centers.as_slice());
    w.array("log_precisions", p.precisions.log_precisions.as_slice());
    w.u64("d_in", model.classifier.input_dim() as u64);
    w.array("weights", model.classifier.weights.as_slice());
    w.array("biases", &model.classifier.biases);
    w.str("config.init_mode", c.init_mode.as_str());
    w.f64("config.lr_w", c.lr_w);
    w.f64("config.lr_c", c.lr_c);
    w.f64("config.lr_sigma", c.lr_sigma);
    w.u64("config.batch_size", c.batch_size as u64);
    w.u64("config.epochs", c.epochs as u64);
    w.u64("config.subsample", c.subsample.map_or(0, |s| s as u64));
    w.u64("config.sample_with_replacement", c.sample_with_replacement as u64);
    w.u64("config.init_classifier_epochs", c.init_classifier_epochs as u64);
    w.u64("config.finetune_epochs", c.finetune_epochs as u64);
    w.u64("config.pool_cap", c.pool_cap as u64);
    w.u64("config.cluster_iters", c.cluster_iters as u64);
    w.f64("config.variance_floor", c.variance_floor);
    w.u64("config.seed", c.seed);
    let m = &model.metrics;
    w.array("metrics.epoch", &m.iter().map(|e| e.epoch as f64).collect::<Vec<_>>());
    w.array(
        "metrics.train_loss",
        &m.iter().map(|e| e.train_loss).collect::<Vec<_>>(),
    );
    w.array(
        "metrics.train_acc",
        &m.iter().map(|e| e.train_accuracy).collect::<Vec<_>>(),
    );
    w.array(
        "metrics.test_acc",
        &m.iter()
            .map(|e| e.test_accuracy.unwrap_or(f64::NAN))
            .collect::<Vec<_>>(),
    );
    Ok(w.finish())
}

struct Entries(HashMap<String, Value>);

impl Entries {
    fn get(&self, key: &str) -> Result<&Value, FormatError> {
        self.0
            .get(key)
            .ok_or_else(|| FormatError::Malformed(format!("model file lacks `{key}`")))
    }

    fn u64(&self, key: &str) -> Result<u64, FormatError> {
        match self.get(key)? {
            Value::U64(v) => Ok(*v),
            _ => Err(FormatError::Malformed(format!("`{key}` is not an integer"))),
        }
    }

    fn usize(&self, key: &str) -> Result<usize, FormatError> {
        usize::try_from(self.u64(key)?).map_err(|_| FormatError::Malformed(format!("`{key}` too large")))
    }

    fn f64(&self, key: &str) -> Result<f64, FormatError> {
        match self.get(key)? {
            Value::F64(v) => Ok(*v),
            _ => Err(FormatError::Malformed(format!("`{key}` is not a float"))),
        }
    }

    fn str(&self, key: &str) -> Result<&str, FormatError> {
        match self.get(key)? {
            Value::Str(s) => Ok(s),
            _ => Err(FormatError::Malformed(format!("`{key}` is not a string"))),
        }
    }

    fn array(&self, key: &str, len: Option<usize>) -> Result<&[f64], FormatError> {
        match self.get(key)? {
            Value::Array(a) => {
                if let Some(n) = len {
                    if a.len() != n {
                        return Err(FormatError::Malformed(format!(
                            "`{key}` has {} values, expected {n}",
                            a.len()
                        )));
                    }
                }
                Ok(a)
            }
            _ => Err(FormatError::Malformed(format!("`{key}` is not an array"))),
        }
    }
}

fn read_entries(bytes: &[u8]) -> Result<Entries, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    r.version(MODEL_VERSION)?;
    let count = r.u32("entry count")?;
    let mut map = HashMap::new();
    for _ in 0..count {
        let klen = r.u16("key length")? as usize;
        let key = std::str::from_utf8(r.take(klen, "key")?)
            .map_err(|_| FormatError::Malformed("key is not UTF-8".into()))?
            .to_owned();
        let value = match r.u8("value tag")? {
            1 => Value::U64(r.u64(&key)?),
            2 => Value::F64(r.f64(&key)?),
            3 => {
                let n = r.u32("string length")? as usize;
                let s = std::str::from_utf8(r.take(n, &key)?)
                    .map_err(|_| FormatError::Malformed(format!("`{key}` is not UTF-8")))?;
                Value::Str(s.to_owned())
            }
            4 => {
                let n = r.u64("array length")?;
                let bytes = usize::try_from(n)
                    .ok()
                    .and_then(|n| n.checked_mul(8))
                    .ok_or_else(|| FormatError::Malformed(format!("`{key}` length overflows")))?;
                let raw = r.take(bytes, &key)?;
                Value::Array(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            }
            t => return Err(FormatError::Malformed(format!("unknown value tag {t} for `{key}`"))),
        };
        map.insert(key, value);
    }
    if r.remaining() != 0 {
        return Err(FormatError::Malformed(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Entries(map))
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let e = read_entries(bytes)?;
    let bad = |err: crate::Error| FormatError::Malformed(err.to_string());
    let kind = e.str("kind")?.parse().map_err(bad)?;
    let (k, d, m, d_in) = (e.usize("k")?, e.usize("d")?, e.usize("m")?, e.usize("d_in")?);
    let feature_map = FeatureMapConfig {
        order: e.usize("map.order")?,
        period: e.f64("map.period")?,
        floor: e.f64("map.floor")?,
    };
    let subsample = e.usize("config.subsample")?;
    let config = TrainingConfig {
        kind,
        k,
        gamma: e.f64("gamma")?,
        init_mode: e.str("config.init_mode")?.parse().map_err(bad)?,
        lr_w: e.f64("config.lr_w")?,
        lr_c: e.f64("config.lr_c")?,
        lr_sigma: e.f64("config.lr_sigma")?,
        batch_size: e.usize("config.batch_size")?,
        epochs: e.usize("config.epochs")?,
        subsample: (subsample > 0).then_some(subsample),
        sample_with_replacement: e.u64("config.sample_with_replacement")? != 0,
        use_chi2_map: e.u64("map.enabled")? != 0,
        feature_map,
        init_classifier_epochs: e.usize("config.init_classifier_epochs")?,
        finetune_epochs: e.usize("config.finetune_epochs")?,
        pool_cap: e.usize("config.pool_cap")?,
        cluster_iters: e.usize("config.cluster_iters")?,
        variance_floor: e.f64("config.variance_floor")?,
        seed: e.u64("config.seed")?,
    };
    let to_matrix = |rows: usize, cols: usize, key: &str| -> Result<Matrix, FormatError> {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| FormatError::Malformed(format!("`{key}` shape overflows")))?;
        Ok(Matrix::from_vec(rows, cols, e.array(key, Some(len))?.to_vec()).expect("length checked"))
    };
    let params = AggregatorParams::new(
        kind,
        to_matrix(k, d, "codebook")?,
        to_matrix(k, d, "log_precisions")?,
        config.gamma,
    )
    .map_err(bad)?;
    let classifier = ClassifierParams {
        weights: to_matrix(m, d_in, "weights")?,
        biases: e.array("biases", Some(m))?.to_vec(),
    };
    let epochs = e.array("metrics.epoch", None)?;
    let n = epochs.len();
    let loss = e.array("metrics.train_loss", Some(n))?;
    let train_acc = e.array("metrics.train_acc", Some(n))?;
    let test_acc = e.array("metrics.test_acc", Some(n))?;
    let metrics = (0..n)
        .map(|i| EpochMetrics {
            epoch: epochs[i] as usize,
            train_loss: loss[i],
            train_accuracy: train_acc[i],
            test_accuracy: (!test_acc[i].is_nan()).then_some(test_acc[i]),
        })
        .collect();
    let model = TrainedModel {
        params,
        classifier,
        config,
        metrics,
    };
    model.validate().map_err(bad)?;
    Ok(model)
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(model)?;
    fs::write(path, bytes).map_err(FormatError::from)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(FormatError::from)?;
    from_bytes(&bytes)
}
