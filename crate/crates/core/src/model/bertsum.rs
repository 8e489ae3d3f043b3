use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::INIT_STD;
use crate::nn::params::truncated_normal;
use crate::nn::{
    Dropout, Graph, LayerNorm, LayerNormLstmCell, Linear, ParamId, ParamStore, Tensor,
    TransformerBlock, Var,
};

use super::config::{HeadKind, ModelConfig};
use super::encoding::EncodedInput;

/// Per-sentence vectors read at the `[CLS]` positions, `[sentences, d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsVectors(pub Tensor);

impl ClsVectors {
    pub fn num_sentences(&self) -> usize {
        self.0.rows()
    }
}

/// Predicted inclusion probabilities, one per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceScores(pub Vec<f64>);

impl SentenceScores {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
struct Encoder {
    token_embedding: ParamId,
    segment_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    blocks: Vec<TransformerBlock>,
}

#[derive(Debug, Clone)]
enum Head {
    Classifier {
        output: Linear,
    },
    InterTransformer {
        blocks: Vec<TransformerBlock>,
        output: Linear,
    },
    Lstm {
        cell: LayerNormLstmCell,
        output: Linear,
    },
}

/// Sinusoidal encoding of sentence positions, `[n, d]`.
pub fn sinusoidal_positions(n: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, d]);
    for pos in 0..n {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            t.data_mut()[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

/// Document encoder plus one summarization head.
#[derive(Debug, Clone)]
pub struct BertSum {
    config: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    head: Head,
}

impl BertSum {
    /// Initializes a model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.d_model;

        let token_embedding = params.add(
            "encoder.token_embedding",
            truncated_normal(&mut rng, &[config.vocab_size, d], INIT_STD),
        )?;
        let segment_embedding = params.add(
            "encoder.segment_embedding",
            truncated_normal(&mut rng, &[2, d], INIT_STD),
        )?;
        let position_embedding = params.add(
            "encoder.position_embedding",
            truncated_normal(&mut rng, &[config.max_positions, d], INIT_STD),
        )?;
        let embedding_norm = LayerNorm::new(&mut params, "encoder.embedding_norm", d)?;
        let blocks = (0..config.n_enc_layers)
            .map(|l| {
                TransformerBlock::new(
                    &mut params,
                    &mut rng,
                    &format!("encoder.layer{l}"),
                    d,
                    config.n_heads,
                    config.d_ff,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder = Encoder {
            token_embedding,
            segment_embedding,
            position_embedding,
            embedding_norm,
            blocks,
        };

        let head = match config.head_kind {
            HeadKind::Classifier => Head::Classifier {
                output: Linear::new(&mut params, &mut rng, "head.output", d, 1)?,
            },
            HeadKind::InterTransformer => {
                let blocks = (0..config.n_head_layers)
                    .map(|l| {
                        TransformerBlock::new(
                            &mut params,
                            &mut rng,
                            &format!("head.layer{l}"),
                            d,
                            config.n_heads,
                            config.d_ff,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Head::InterTransformer {
                    blocks,
                    output: Linear::new(&mut params, &mut rng, "head.output", d, 1)?,
                }
            }
            HeadKind::Lstm => Head::Lstm {
                cell: LayerNormLstmCell::new(&mut params, &mut rng, "head.lstm", d, d)?,
                output: Linear::new(&mut params, &mut rng, "head.output", d, 1)?,
            },
        };

        Ok(BertSum {
            config,
            params,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Runs the encoder and gathers the `[CLS]` rows.
    pub fn encode(
        &self,
        g: &mut Graph,
        input: &EncodedInput,
        dropout: &mut Dropout<'_>,
    ) -> Result<Var> {
        let n = input.len();
        if n > self.config.max_positions {
            return Err(Error::shape(
                "encoder",
                format!("input of {n} positions exceeds max_positions {}", self.config.max_positions),
            ));
        }
        if input.segment_ids.len() != n || input.pad_mask.len() != n {
            return Err(Error::shape("encoder", "token, segment and mask lengths differ"));
        }
        if input.cls_positions.is_empty() {
            return Err(Error::shape("encoder", "input has no sentences"));
        }
        let store = &self.params;
        let enc = &self.encoder;

        let tok_ids: Vec<usize> = input.token_ids.iter().map(|&t| t as usize).collect();
        if let Some(&bad) = tok_ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::shape(
                "encoder",
                format!("token id {bad} outside vocabulary of {}", self.config.vocab_size),
            ));
        }
        let seg_ids: Vec<usize> = input.segment_ids.iter().map(|&s| s as usize).collect();
        let pos_ids: Vec<usize> = (0..n).collect();

        let tok_table = g.param(store, enc.token_embedding);
        let seg_table = g.param(store, enc.segment_embedding);
        let pos_table = g.param(store, enc.position_embedding);
        let tok = g.rows(tok_table, &tok_ids)?;
        let seg = g.rows(seg_table, &seg_ids)?;
        let pos = g.rows(pos_table, &pos_ids)?;
        let x = g.add(tok, seg)?;
        let x = g.add(x, pos)?;
        let x = enc.embedding_norm.forward(g, store, x)?;
        let mut x = dropout.apply(g, x)?;

        let keep: Option<Vec<bool>> = input.has_padding().then(|| {
            (0..n)
                .flat_map(|_| input.pad_mask.iter().map(|&p| !p))
                .collect()
        });
        for block in &enc.blocks {
            x = block.forward(g, store, x, keep.as_deref(), dropout)?;
        }
        g.rows(x, &input.cls_positions)
    }

    /// Applies the summarization head to sentence vectors; returns logits
    /// of shape `[sentences, 1]`.
    pub fn head_logits(&self, g: &mut Graph, cls: Var, dropout: &mut Dropout<'_>) -> Result<Var> {
        let store = &self.params;
        match &self.head {
            Head::Classifier { output } => output.forward(g, store, cls),
            Head::InterTransformer { blocks, output } => {
                let (m, d) = {
                    let t = g.value(cls);
                    (t.rows(), t.cols())
                };
                let mut h = g.add_const(cls, &sinusoidal_positions(m, d))?;
                for block in blocks {
                    h = block.forward(g, store, h, None, dropout)?;
                }
                output.forward(g, store, h)
            }
            Head::Lstm { cell, output } => {
                let m = g.value(cls).rows();
                let mut h = g.constant(Tensor::zeros(&[1, cell.hidden]));
                let mut c = g.constant(Tensor::zeros(&[1, cell.hidden]));
                let mut outs = Vec::with_capacity(m);
                for i in 0..m {
                    let x = g.rows(cls, &[i])?;
                    let state = cell.step(g, store, x, h, c)?;
                    h = state.hidden;
                    c = state.cell;
                    outs.push(h);
                }
                let hs = g.concat_rows(&outs)?;
                output.forward(g, store, hs)
            }
        }
    }

    /// Full forward pass to per-sentence logits.
    pub fn logits(&self, g: &mut Graph, input: &EncodedInput, dropout: &mut Dropout<'_>) -> Result<Var> {
        let cls = self.encode(g, input, dropout)?;
        self.head_logits(g, cls, dropout)
    }

    /// Mean BCE of the document against `labels` (truncated to the
    /// sentences that survived encoding).
    pub fn loss(
        &self,
        g: &mut Graph,
        input: &EncodedInput,
        labels: &[u8],
        dropout: &mut Dropout<'_>,
    ) -> Result<Var> {
        let m = input.num_sentences();
        if labels.len() < m {
            return Err(Error::shape("loss", format!("{} labels for {m} sentences", labels.len())));
        }
        let targets: Vec<f64> = labels[..m].iter().map(|&l| f64::from(l)).collect();
        let logits = self.logits(g, input, dropout)?;
        g.bce_with_logits(logits, &targets)
    }

    pub fn cls_vectors(&self, input: &EncodedInput) -> Result<ClsVectors> {
        let mut g = Graph::new();
        let cls = self.encode(&mut g, input, &mut Dropout::disabled())?;
        Ok(ClsVectors(g.value(cls).clone()))
    }

    /// Scores precomputed sentence vectors with this model's head.
    pub fn score_cls(&self, cls: &ClsVectors) -> Result<SentenceScores> {
        if cls.num_sentences() == 0 {
            return Err(Error::shape("head", "no sentence vectors"));
        }
        let mut g = Graph::new();
        let t = g.constant(cls.0.clone());
        let logits = self.head_logits(&mut g, t, &mut Dropout::disabled())?;
        let probs = g.sigmoid(logits);
        Ok(SentenceScores(g.value(probs).data().to_vec()))
    }

    /// Inference-mode sentence probabilities.
    pub fn scores(&self, input: &EncodedInput) -> Result<SentenceScores> {
        let mut g = Graph::new();
        let logits = self.logits(&mut g, input, &mut Dropout::disabled())?;
        let probs = g.sigmoid(logits);
        Ok(SentenceScores(g.value(probs).data().to_vec()))
    }
}
