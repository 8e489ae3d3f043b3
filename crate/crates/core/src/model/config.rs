use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summarization layer stacked on the sentence vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Classifier,
    InterTransformer,
    Lstm,
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(HeadKind::Classifier),
            "inter_transformer" | "transformer" => Ok(HeadKind::InterTransformer),
            "lstm" => Ok(HeadKind::Lstm),
            other => Err(Error::Config(format!("unknown head kind `{other}`"))),
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Classifier => "classifier",
            HeadKind::InterTransformer => "inter_transformer",
            HeadKind::Lstm => "lstm",
        })
    }
}

/// How segment ids are assigned to sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentScheme {
    /// Odd sentences (1-indexed) get segment A, even ones segment B.
    #[default]
    Interval,
    /// Every sentence gets segment A.
    Constant,
}

fn default_max_positions() -> usize {
    512
}
fn default_head_layers() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
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
}

impl ModelConfig {
    /// A small configuration suitable for desk-scale runs.
    pub fn tiny(vocab_size: usize, head_kind: HeadKind) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_enc_layers: 2,
            n_heads: 2,
            d_ff: 128,
            max_positions: 256,
            head_kind,
            n_head_layers: 2,
            dropout: 0.0,
            segments: SegmentScheme::Interval,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 4 {
            return fail(format!("vocab_size {} leaves no room for reserved tokens", self.vocab_size));
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive".into());
        }
        if self.max_positions < 3 {
            return fail("max_positions must be at least 3".into());
        }
        if self.head_kind == HeadKind::InterTransformer && self.n_head_layers == 0 {
            return fail("inter_transformer head needs n_head_layers >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
