//! Run configuration file (TOML).
//!
//! ```toml
//! schema_version = 1
//! protocol = "f1"
//!
//! [model]
//! d_model = 64
//! n_enc_layers = 2
//! n_heads = 2
//! d_ff = 128
//! head_kind = "inter_transformer"
//!
//! [train]
//! total_steps = 1000
//! warmup = 100
//!
//! [paths]
//! train = "data/train.jsonl"
//! val = "data/val.jsonl"
//! out_dir = "runs/base"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::DEFAULT_K;
use crate::model::{HeadKind, ModelConfig, SegmentScheme};
use crate::rouge::Protocol;
use crate::train::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_max_positions() -> usize {
    512
}
fn default_head_layers() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}
fn default_vocab_size() -> usize {
    30_000
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_true() -> bool {
    true
}

/// Model hyperparameters; the vocabulary size comes from the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_enc_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    #[serde(default = "default_max_positions")]
    pub max_positions: usize,
    pub head_kind: HeadKind,
    #[serde(default = "default_head_layers")]
    pub n_head_layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub segments: SegmentScheme,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on non-reserved tokens when the vocabulary is built.
    #[serde(default = "default_vocab_size")]
    pub max_vocab: usize,
}

impl ModelSpec {
    pub fn to_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_enc_layers: self.n_enc_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_positions: self.max_positions,
            head_kind: self.head_kind,
            n_head_layers: self.n_head_layers,
            dropout: self.dropout,
            segments: self.segments,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub train: PathBuf,
    pub val: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Existing vocabulary file; built from the training data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// Sentences per extracted summary.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub blocking: bool,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    pub paths: Paths,
}

fn default_protocol() -> Protocol {
    Protocol::F1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.model.to_config(4 + self.model.max_vocab).validate()?;
        self.train.validate()
    }

    /// Fails unless every input path exists.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let inputs = [Some(&p.train), Some(&p.val), p.test.as_ref(), p.vocab.as_ref()];
        for path in inputs.into_iter().flatten() {
            if !path.exists() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ));
            }
        }
        Ok(())
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train);
        fix(&mut self.val);
        fix(&mut self.out_dir);
        if let Some(p) = self.test.as_mut() {
            fix(p);
        }
        if let Some(p) = self.vocab.as_mut() {
            fix(p);
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
schema_version = 1
protocol = "limited_recall"
k = 2

[model]
d_model = 16
n_enc_layers = 1
n_heads = 2
d_ff = 32
head_kind = "lstm"

[train]
total_steps = 10
warmup = 5

[paths]
train = "train.jsonl"
val = "val.jsonl"
out_dir = "out"
"#;

    #[test]
    fn parse_serialize_parse_is_identity() {
        let a = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(a.protocol, Protocol::LimitedRecall);
        assert_eq!(a.train.accumulation, 2);
        assert!(a.blocking);
        let b = RunConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_fail() {
        let bad = SAMPLE.replace("k = 2", "k = 2\nbogus = 1");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("warmup = 5", "warmup = 5\nlearning_rate = 1");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn wrong_schema_version_fails() {
        let bad = SAMPLE.replace("schema_version = 1", "schema_version = 9");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn bad_protocol_fails() {
        let bad = SAMPLE.replace("limited_recall", "precision");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, SAMPLE).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.train, dir.path().join("train.jsonl"));
        assert!(cfg.check_inputs().is_err());
        std::fs::write(dir.path().join("train.jsonl"), "").unwrap();
        std::fs::write(dir.path().join("val.jsonl"), "").unwrap();
        cfg.check_inputs().unwrap();
    }
}
