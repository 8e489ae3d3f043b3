//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into the [`ParamStore`] the parameters were read from.

use std::rc::Rc;

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Tensor>),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Rows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    Sum(Var),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Reads a parameter onto the tape. Repeated reads share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_vars.get(id.0) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        matmul_acc(ta.data(), tb.data(), &mut out, n, k, m);
        let t = Tensor::matrix(n, m, out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("add", ta, tb)?;
        let mut t = ta.clone();
        t.add_assign(tb);
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Adds a `[m]` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.numel() != ta.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", ta.shape(), tr.shape()),
            ));
        }
        let mut t = ta.clone();
        let c = tr.numel();
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            *x += tr.data()[i % c];
        }
        Ok(self.push(t, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("mul", ta, tb)?;
        let mut t = ta.clone();
        for (x, y) in t.data_mut().iter_mut().zip(tb.data()) {
            *x *= y;
        }
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s))
    }

    /// Elementwise product with a constant tensor (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let ta = self.value(a);
        same_shape("mul_const", ta, &c)?;
        let mut t = ta.clone();
        for (x, y) in t.data_mut().iter_mut().zip(c.data()) {
            *x *= y;
        }
        Ok(self.push(t, Op::MulConst(a, Rc::new(c))))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var> {
        let ta = self.value(a);
        same_shape("add_const", ta, c)?;
        let mut t = ta.clone();
        t.add_assign(c);
        Ok(self.push(t, Op::AddConst(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(gelu);
        self.push(t, Op::Gelu(a))
    }

    /// Row-wise softmax. `keep`, when given, has one flag per element;
    /// dropped entries get probability zero and a row with nothing kept
    /// outputs all zeros.
    pub fn softmax_rows(&mut self, a: Var, keep: Option<&[bool]>) -> Result<Var> {
        let ta = self.value(a);
        if let Some(k) = keep {
            if k.len() != ta.numel() {
                return Err(Error::shape(
                    "softmax",
                    format!("mask of {} for {:?}", k.len(), ta.shape()),
                ));
            }
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut out = Tensor::zeros(ta.shape());
        {
            let src = ta.data();
            let dst = out.data_mut();
            for r in 0..rows {
                let span = r * cols..(r + 1) * cols;
                let kept = |j: usize| keep.is_none_or(|k| k[span.start + j]);
                let mut max = f64::NEG_INFINITY;
                for j in 0..cols {
                    if kept(j) {
                        max = max.max(src[span.start + j]);
                    }
                }
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut sum = 0.0;
                for j in 0..cols {
                    if kept(j) {
                        let e = (src[span.start + j] - max).exp();
                        dst[span.start + j] = e;
                        sum += e;
                    }
                }
                for x in &mut dst[span] {
                    *x /= sum;
                }
            }
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Layer normalization over the last axis with `[cols]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let c = tx.cols();
        if tg.numel() != c || tb.numel() != c {
            return Err(Error::shape(
                "layer_norm",
                format!("{:?} with gain {:?}, bias {:?}", tx.shape(), tg.shape(), tb.shape()),
            ));
        }
        let mut xhat = Tensor::zeros(tx.shape());
        let mut out = Tensor::zeros(tx.shape());
        let mut rstd = Vec::with_capacity(tx.rows());
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd.push(rs);
            for (j, &x) in row.iter().enumerate() {
                let h = (x - mean) * rs;
                xhat.data_mut()[r * c + j] = h;
                out.data_mut()[r * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Gathers rows of a matrix; also serves as embedding lookup.
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let (n, c) = (ta.rows(), ta.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("rows", format!("index {bad} out of {n} rows")));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(ta.row(i));
        }
        let t = Tensor::matrix(idx.len(), c, data)?;
        Ok(self.push(t, Op::Rows(a, idx.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {c}", start + len),
            ));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let t = Tensor::matrix(ta.rows(), len, data)?;
        Ok(self.push(t, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::matrix(rows, total, data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        let t = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec())))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (n, m) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                data[j * n + i] = ta.data()[i * m + j];
            }
        }
        let t = Tensor::matrix(m, n, data).expect("transpose preserves size");
        self.push(t, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean binary cross-entropy computed from logits.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let tz = self.value(logits);
        if tz.numel() != labels.len() {
            return Err(Error::shape(
                "bce",
                format!("{} logits for {} labels", tz.numel(), labels.len()),
            ));
        }
        let n = labels.len().max(1) as f64;
        let loss: f64 = tz
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, labels.to_vec())))
    }

    /// Gradients of a scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lt.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lt.shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Accumulates `d loss / d param` into the store's gradient buffers.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let (Some(var), true) = (var, pid < store.len()) {
                if let Some(g) = grads.wrt(*var) {
                    store.get_mut(ParamId(pid)).grad.add_assign(g);
                }
            }
        }
        Ok(())
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                let mut ga = Tensor::zeros(ta.shape());
                matmul_bt_acc(g.data(), tb.data(), ga.data_mut(), n, k, m);
                let mut gb = Tensor::zeros(tb.shape());
                matmul_at_acc(ta.data(), g.data(), gb.data_mut(), n, k, m);
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                let c = val(*row).numel();
                let mut gr = Tensor::zeros(val(*row).shape());
                for (i, x) in g.data().iter().enumerate() {
                    gr.data_mut()[i % c] += x;
                }
                acc(*a, g.clone());
                acc(*row, gr);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(tb.data()) {
                    *x *= y;
                }
                let mut gb = g.clone();
                for (x, y) in gb.data_mut().iter_mut().zip(ta.data()) {
                    *x *= y;
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::MulConst(a, c) => {
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(c.data()) {
                    *x *= y;
                }
                acc(*a, ga);
            }
            Op::AddConst(a) => acc(*a, g.clone()),
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    *x *= y * (1.0 - y);
                }
                acc(*a, ga);
            }
            Op::Tanh(a) => {
                let mut ga = g.clone();
                for (x, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                    *x *= 1.0 - y * y;
                }
                acc(*a, ga);
            }
            Op::Gelu(a) => {
                let mut ga = g.clone();
                for (x, z) in ga.data_mut().iter_mut().zip(val(*a).data()) {
                    *x *= gelu_grad(*z);
                }
                acc(*a, ga);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut ga = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        ga.data_mut()[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let tg = val(*gain);
                let c = xhat.cols();
                let mut gx = Tensor::zeros(xhat.shape());
                let mut ggain = Tensor::zeros(tg.shape());
                let mut gbias = Tensor::zeros(tg.shape());
                for (r, &rs) in rstd.iter().enumerate() {
                    let (hr, gr) = (xhat.row(r), g.row(r));
                    let mut sum_d = 0.0;
                    let mut sum_dh = 0.0;
                    for j in 0..c {
                        let d = gr[j] * tg.data()[j];
                        sum_d += d;
                        sum_dh += d * hr[j];
                        ggain.data_mut()[j] += gr[j] * hr[j];
                        gbias.data_mut()[j] += gr[j];
                    }
                    let inv_c = 1.0 / c as f64;
                    for j in 0..c {
                        let d = gr[j] * tg.data()[j];
                        gx.data_mut()[r * c + j] =
                            rs * (d - inv_c * sum_d - hr[j] * inv_c * sum_dh);
                    }
                }
                acc(*x, gx);
                acc(*gain, ggain);
                acc(*bias, gbias);
            }
            Op::Rows(a, idx) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut ga = Tensor::zeros(ta.shape());
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        ga.data_mut()[i * c + j] += g.data()[k * c + j];
                    }
                }
                acc(*a, ga);
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (c, len) = (ta.cols(), g.cols());
                let mut ga = Tensor::zeros(ta.shape());
                for r in 0..ta.rows() {
                    ga.data_mut()[r * c + start..r * c + start + len].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = val(p);
                    let pc = tp.cols();
                    let mut gp = Tensor::zeros(tp.shape());
                    for r in 0..tp.rows() {
                        gp.data_mut()[r * pc..(r + 1) * pc]
                            .copy_from_slice(&g.row(r)[offset..offset + pc]);
                    }
                    offset += pc;
                    acc(p, gp);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = val(p);
                    let n = tp.numel();
                    let gp = Tensor::new(tp.shape().to_vec(), g.data()[offset..offset + n].to_vec())
                        .expect("slice matches part shape");
                    offset += n;
                    acc(p, gp);
                }
            }
            Op::Transpose(a) => {
                let (n, m) = (g.rows(), g.cols());
                let mut data = vec![0.0; n * m];
                for i in 0..n {
                    for j in 0..m {
                        data[j * n + i] = g.data()[i * m + j];
                    }
                }
                let ga = Tensor::new(val(*a).shape().to_vec(), data).expect("transpose");
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let s = g.item();
                acc(*a, Tensor::filled(val(*a).shape(), s));
            }
            Op::BceWithLogits(z, labels) => {
                let s = g.item() / labels.len().max(1) as f64;
                let mut gz = Tensor::zeros(val(*z).shape());
                for ((o, &zv), &y) in gz.data_mut().iter_mut().zip(val(*z).data()).zip(labels) {
                    *o = s * (sigmoid(zv) - y);
                }
                acc(*z, gz);
            }
        }
    }
}

/// Per-node gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
