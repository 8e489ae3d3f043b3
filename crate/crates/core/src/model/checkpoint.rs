//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       8 bytes  "BSUMCKPT"
//! version     u32
//! header_len  u64
//! header      TOML text: format_version, step, val_loss, model config, vocabulary
//! n_tensors   u64
//! per tensor: name_len u32 | name utf-8 | ndim u32 | dims u64 x ndim | values f64 x numel
//! ```
//!
//! Parameter tensors use the model's parameter names. Optimizer moments are
//! stored under `optim.m/<name>` and `optim.v/<name>`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::Tensor;

use super::bertsum::BertSum;
use super::config::ModelConfig;

pub const MAGIC: &[u8; 8] = b"BSUMCKPT";
pub const FORMAT_VERSION: u32 = 1;

const OPTIM_M: &str = "optim.m/";
const OPTIM_V: &str = "optim.v/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(default)]
    pub optimizer_step: u64,
    pub model: ModelConfig,
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Adam moment estimates keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerSnapshot {
    pub step: u64,
    pub first_moments: Vec<NamedTensor>,
    pub second_moments: Vec<NamedTensor>,
}

/// Snapshot of every parameter plus optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerSnapshot>,
}

impl Checkpoint {
    pub fn capture(
        model: &BertSum,
        vocab: &Vocabulary,
        step: u64,
        val_loss: Option<f64>,
        optimizer: Option<OptimizerSnapshot>,
    ) -> Self {
        let params = model
            .params()
            .iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                tensor: p.value.clone(),
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                step,
                val_loss,
                optimizer_step: optimizer.as_ref().map_or(0, |o| o.step),
                model: model.config().clone(),
                vocab: vocab.tokens().to_vec(),
            },
            params,
            optimizer,
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.header.vocab.clone())
    }

    /// Builds a model from the stored configuration and loads the weights.
    pub fn to_model(&self) -> Result<BertSum> {
        let mut model = BertSum::new(self.header.model.clone())?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    /// Copies stored weights into `model`, requiring the same configuration
    /// (seed aside) and a one-to-one match of parameter names and shapes.
    pub fn load_into(&self, model: &mut BertSum) -> Result<()> {
        let mut stored = self.header.model.clone();
        stored.seed = model.config().seed;
        if &stored != model.config() {
            return Err(Error::CheckpointMismatch {
                msg: "model configuration differs".into(),
                names: config_diff(&stored, model.config()),
            });
        }
        let have: BTreeSet<&str> = self.params.iter().map(|t| t.name.as_str()).collect();
        let want: BTreeSet<&str> = model.params().iter().map(|p| p.name.as_str()).collect();
        let mut offending: Vec<String> = have
            .symmetric_difference(&want)
            .map(|s| s.to_string())
            .collect();
        for t in &self.params {
            if let Some(id) = model.params().id(&t.name) {
                if model.params().value(id).shape() != t.tensor.shape() {
                    offending.push(format!("{} (shape)", t.name));
                }
            }
        }
        if !offending.is_empty() || have.len() != self.params.len() {
            return Err(Error::CheckpointMismatch {
                msg: "parameter names or shapes do not match".into(),
                names: offending,
            });
        }
        for t in &self.params {
            let id = model.params().id(&t.name).expect("checked above");
            model.params_mut().get_mut(id).value = t.tensor.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = toml::to_string(&self.header).expect("header serializes");
        let mut tensors: Vec<(&str, &Tensor)> =
            self.params.iter().map(|t| (t.name.as_str(), &t.tensor)).collect();
        let prefixed: Vec<(String, &Tensor)> = self
            .optimizer
            .iter()
            .flat_map(|o| {
                o.first_moments
                    .iter()
                    .map(|t| (format!("{OPTIM_M}{}", t.name), &t.tensor))
                    .chain(o.second_moments.iter().map(|t| (format!("{OPTIM_V}{}", t.name), &t.tensor)))
            })
            .collect();
        tensors.extend(prefixed.iter().map(|(n, t)| (n.as_str(), *t)));

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = r.u64()? as usize;
        let header_text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|e| Error::CorruptCheckpoint(format!("header is not utf-8: {e}")))?;
        let header: CheckpointHeader = toml::from_str(header_text)
            .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;

        let count = r.u64()? as usize;
        let mut params = Vec::new();
        let mut optimizer: Option<OptimizerSnapshot> = None;
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|e| Error::CorruptCheckpoint(format!("tensor name: {e}")))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("tensor `{name}` too large"))
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
            if let Some(base) = name.strip_prefix(OPTIM_M) {
                optimizer.get_or_insert_with(Default::default).first_moments.push(NamedTensor {
                    name: base.to_string(),
                    tensor,
                });
            } else if let Some(base) = name.strip_prefix(OPTIM_V) {
                optimizer.get_or_insert_with(Default::default).second_moments.push(NamedTensor {
                    name: base.to_string(),
                    tensor,
                });
            } else {
                params.push(NamedTensor { name, tensor });
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint("trailing bytes".into()));
        }
        if let Some(o) = optimizer.as_mut() {
            o.step = header.optimizer_step;
        }
        Ok(Checkpoint {
            header,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn config_diff(a: &ModelConfig, b: &ModelConfig) -> Vec<String> {
    let ta = toml::Table::try_from(a).expect("config serializes");
    let tb = toml::Table::try_from(b).expect("config serializes");
    let keys: BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
    keys.into_iter()
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.to_string())
        .collect()
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
