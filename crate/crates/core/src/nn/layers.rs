//! Layers assembled from graph ops. Each layer owns only [`ParamId`]s; the
//! values live in a [`ParamStore`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{truncated_normal, ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-6;
pub const INIT_STD: f64 = 0.02;

/// Inverted dropout. Disabled when there is no RNG or the rate is zero.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'static> {
    pub fn disabled() -> Self {
        Dropout { rate: 0.0, rng: None }
    }
}

impl<'a> Dropout<'a> {
    pub fn new(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Dropout {
            rate,
            rng: Some(rng),
        }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let mut mask = Tensor::zeros(g.value(x).shape());
        for m in mask.data_mut() {
            if rng.random::<f64>() < keep {
                *m = 1.0 / keep;
            }
        }
        g.mul_const(x, mask)
    }
}

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.add(
                format!("{name}.weight"),
                truncated_normal(rng, &[d_in, d_out], INIT_STD),
            )?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add(format!("{name}.gain"), Tensor::ones(&[dim]))?,
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LN_EPS)
    }
}

/// Multi-head scaled dot-product attention with input and output
/// projections.
#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        n_heads: usize,
    ) -> Result<Self> {
        if n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(Error::shape(
                "multi_head_attention",
                format!("d_model {d_model} not divisible by {n_heads} heads"),
            ));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(store, rng, &format!("{name}.query"), d_model, d_model)?,
            key: Linear::new(store, rng, &format!("{name}.key"), d_model, d_model)?,
            value: Linear::new(store, rng, &format!("{name}.value"), d_model, d_model)?,
            output: Linear::new(store, rng, &format!("{name}.output"), d_model, d_model)?,
            n_heads,
            d_model,
        })
    }

    /// `keep` is a row-major `[n_query, n_key]` attention mask (true =
    /// attend). A query row with nothing to attend to yields zeros before
    /// the output projection.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        query_in: Var,
        kv_in: Var,
        keep: Option<&[bool]>,
    ) -> Result<Var> {
        let (nq, nk) = (g.value(query_in).rows(), g.value(kv_in).rows());
        if let Some(k) = keep {
            if k.len() != nq * nk {
                return Err(Error::shape(
                    "multi_head_attention",
                    format!("mask of {} for {nq}x{nk} attention", k.len()),
                ));
            }
        }
        let q = self.query.forward(g, store, query_in)?;
        let k = self.key.forward(g, store, kv_in)?;
        let v = self.value.forward(g, store, kv_in)?;
        let d_head = self.d_model / self.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * d_head, d_head)?;
            let kh = g.slice_cols(k, h * d_head, d_head)?;
            let vh = g.slice_cols(v, h * d_head, d_head)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let probs = g.softmax_rows(scores, keep)?;
            heads.push(g.matmul(probs, vh)?);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        self.output.forward(g, store, joined)
    }
}

/// Position-wise `W2 gelu(W1 x + b1) + b2`.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        d_ff: usize,
    ) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::new(store, rng, &format!("{name}.inner"), d_model, d_ff)?,
            outer: Linear::new(store, rng, &format!("{name}.outer"), d_ff, d_model)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, store, x)?;
        let h = g.gelu(h);
        self.outer.forward(g, store, h)
    }
}

/// Post-LN Transformer block:
/// `h~ = LN(x + MHAtt(x))`, `out = LN(h~ + FFN(h~))`.
#[derive(Debug, Clone, Copy)]
pub struct TransformerBlock {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_norm: LayerNorm,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            attention: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), d_model, n_heads)?,
            attention_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), d_model)?,
            ffn: FeedForward::new(store, rng, &format!("{name}.ffn"), d_model, d_ff)?,
            ffn_norm: LayerNorm::new(store, &format!("{name}.ffn_norm"), d_model)?,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        keep: Option<&[bool]>,
        dropout: &mut Dropout<'_>,
    ) -> Result<Var> {
        let a = self.attention.forward(g, store, x, x, keep)?;
        let a = dropout.apply(g, a)?;
        let h = g.add(x, a)?;
        let h = self.attention_norm.forward(g, store, h)?;
        let f = self.ffn.forward(g, store, h)?;
        let f = dropout.apply(g, f)?;
        let out = g.add(h, f)?;
        self.ffn_norm.forward(g, store, out)
    }
}

/// One step of an LSTM cell with layer normalization on the input and
/// recurrent projections and on the cell state.
#[derive(Debug, Clone, Copy)]
pub struct LayerNormLstmCell {
    pub input_proj: ParamId,
    pub hidden_proj: ParamId,
    pub input_norm: LayerNorm,
    pub hidden_norm: LayerNorm,
    pub cell_norm: LayerNorm,
    pub hidden: usize,
}

/// Values produced by one cell step, gate pre-activations in the fixed
/// order forget, input, output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellState {
    pub forget: Var,
    pub input: Var,
    pub output: Var,
    pub candidate: Var,
    pub cell: Var,
    pub hidden: Var,
}

impl LayerNormLstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(LayerNormLstmCell {
            input_proj: store.add(
                format!("{name}.input_proj"),
                truncated_normal(rng, &[d_in, 4 * hidden], INIT_STD),
            )?,
            hidden_proj: store.add(
                format!("{name}.hidden_proj"),
                truncated_normal(rng, &[hidden, 4 * hidden], INIT_STD),
            )?,
            input_norm: LayerNorm::new(store, &format!("{name}.input_norm"), 4 * hidden)?,
            hidden_norm: LayerNorm::new(store, &format!("{name}.hidden_norm"), 4 * hidden)?,
            cell_norm: LayerNorm::new(store, &format!("{name}.cell_norm"), hidden)?,
            hidden,
        })
    }

    /// `x: [1, d_in]`, `h_prev`, `c_prev: [1, hidden]`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<LstmCellState> {
        let wx = g.param(store, self.input_proj);
        let wh = g.param(store, self.hidden_proj);
        let from_x = g.matmul(x, wx)?;
        let from_x = self.input_norm.forward(g, store, from_x)?;
        let from_h = g.matmul(h_prev, wh)?;
        let from_h = self.hidden_norm.forward(g, store, from_h)?;
        let gates = g.add(from_h, from_x)?;

        let n = self.hidden;
        let forget = g.slice_cols(gates, 0, n)?;
        let input = g.slice_cols(gates, n, n)?;
        let output = g.slice_cols(gates, 2 * n, n)?;
        let candidate = g.slice_cols(gates, 3 * n, n)?;

        let f = g.sigmoid(forget);
        let i = g.sigmoid(input);
        let o = g.sigmoid(output);
        let c_tilde = g.tanh(candidate);
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, c_tilde)?;
        let cell = g.add(keep, write)?;
        let normed = self.cell_norm.forward(g, store, cell)?;
        let squashed = g.tanh(normed);
        let hidden = g.mul(o, squashed)?;
        Ok(LstmCellState {
            forget,
            input,
            output,
            candidate,
            cell,
            hidden,
        })
    }
}
