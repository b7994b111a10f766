//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order, so the tape is already topologically sorted and [`Graph::backward`]
//! is a single reverse sweep. Graphs are cheap and meant to be rebuilt for
//! every forward pass; leaves may borrow their tensors so that large weight
//! matrices are never copied onto the tape.

use std::borrow::Cow;

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, softmax_in_place, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Concat(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A recording of one forward computation.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every node that required them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), true)
    }

    /// A trainable leaf owning its value.
    pub fn param_owned(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), true)
    }

    /// A leaf that never receives a gradient, borrowing its value.
    pub fn input(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), false)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err!(
                "add: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            ));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        let cols = x.cols();
        if r.len() != cols {
            return Err(dim_err!(
                "add_row: row of length {} against {} columns",
                r.len(),
                cols
            ));
        }
        let mut data = x.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            for (d, b) in chunk.iter_mut().zip(r.data()) {
                *d += b;
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    /// Adds a one-element tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(dim_err!(
                "add_scalar: shape {:?} is not a scalar",
                sv.shape()
            ));
        }
        let s0 = sv.item();
        let out = self.value(a).map(|v| v + s0);
        Ok(self.push(out, Op::AddScalar(a, s), &[a, s]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err!(
                "mul: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            ));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).relu();
        self.push(out, Op::Relu(a), &[a])
    }

    /// Softmax along the last dimension (each row of a matrix independently).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).softmax()?;
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let out = self.value(a).select_rows(idx)?;
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), &[a]))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.as_matrix_dims();
        if start >= end || end > c {
            return Err(dim_err!(
                "slice_cols: {start}..{end} invalid for {c} columns"
            ));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&x.data()[i * c + start..i * c + end]);
        }
        let out = Tensor::new(vec![r, w], data)?;
        Ok(self.push(out, Op::SliceCols(a, start, end), &[a]))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(dim_err!("concat_cols of nothing"));
        }
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).as_matrix_dims();
            if r != rows {
                return Err(dim_err!("concat_cols: {r} rows against {rows}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Flattens and concatenates into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat(&tensors)?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.as_matrix_dims();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(dim_err!("layer_norm: gain/bias must have length {c}"));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv.data()[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. A vector of logits is treated as a single row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (r, c) = lv.as_matrix_dims();
        if targets.len() != r {
            return Err(dim_err!(
                "cross_entropy: {} targets for {r} rows",
                targets.len()
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Label(format!("class {bad} outside 0..{c}")));
        }
        lv.check_finite("cross_entropy logits")?;
        let mut probs = lv.data().to_vec();
        let mut loss = 0.0;
        for (i, row) in probs.chunks_mut(c).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[targets[i]];
            softmax_in_place(row);
        }
        let out = Tensor::scalar(loss / r as f64);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against targets in [0, 1].
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.len() {
            return Err(dim_err!(
                "bce_with_logits: {} targets for {} logits",
                targets.len(),
                lv.len()
            ));
        }
        if let Some(&bad) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Label(format!("binary target {bad} outside [0, 1]")));
        }
        let loss: f64 = lv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - y * z + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(loss / targets.len() as f64);
        Ok(self.push(
            out,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a one-element `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(dim_err!(
                "backward from non-scalar of shape {:?}",
                out.shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(
        &self,
        op: &Op,
        y: &Tensor,
        dy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.wants(*a) {
                    let g = accum(grads, *a, av.shape());
                    matmul_nt_into(dy.data(), bv.data(), g, m, n, k);
                }
                if self.wants(*b) {
                    let g = accum(grads, *b, bv.shape());
                    matmul_tn_into(av.data(), dy.data(), g, m, k, n);
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                if self.wants(*a) {
                    let g = accum(grads, *a, av.shape());
                    matmul_into(dy.data(), bv.data(), g, m, n, k);
                }
                if self.wants(*b) {
                    let g = accum(grads, *b, bv.shape());
                    matmul_tn_into(dy.data(), av.data(), g, m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(accum(grads, *v, dy.shape()), dy.data());
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    add_into(accum(grads, *a, dy.shape()), dy.data());
                }
                if self.wants(*row) {
                    let rshape = self.value(*row).shape().to_vec();
                    let g = accum(grads, *row, &rshape);
                    for chunk in dy.data().chunks(g.len()) {
                        add_into(g, chunk);
                    }
                }
            }
            Op::AddScalar(a, s) => {
                if self.wants(*a) {
                    add_into(accum(grads, *a, dy.shape()), dy.data());
                }
                if self.wants(*s) {
                    let sshape = self.value(*s).shape().to_vec();
                    accum(grads, *s, &sshape)[0] += dy.sum();
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let g = accum(grads, *a, av.shape());
                    for ((g, d), o) in g.iter_mut().zip(dy.data()).zip(bv.data()) {
                        *g += d * o;
                    }
                }
                if self.wants(*b) {
                    let g = accum(grads, *b, bv.shape());
                    for ((g, d), o) in g.iter_mut().zip(dy.data()).zip(av.data()) {
                        *g += d * o;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.wants(*a) {
                    let g = accum(grads, *a, dy.shape());
                    for (g, d) in g.iter_mut().zip(dy.data()) {
                        *g += c * d;
                    }
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let g = accum(grads, *a, dy.shape());
                    for ((g, d), xv) in g.iter_mut().zip(dy.data()).zip(x.data()) {
                        if *xv > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if self.wants(*a) {
                    let c = y.cols();
                    let g = accum(grads, *a, dy.shape());
                    for ((gr, dr), yr) in g
                        .chunks_mut(c)
                        .zip(dy.data().chunks(c))
                        .zip(y.data().chunks(c))
                    {
                        let dot: f64 = dr.iter().zip(yr).map(|(d, p)| d * p).sum();
                        for ((g, d), p) in gr.iter_mut().zip(dr).zip(yr) {
                            *g += p * (d - dot);
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if self.wants(*a) {
                    let ashape = self.value(*a).shape().to_vec();
                    let c = dy.cols();
                    let g = accum(grads, *a, &ashape);
                    for (k, &r) in idx.iter().enumerate() {
                        add_into(&mut g[r * c..(r + 1) * c], dy.row(k));
                    }
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.wants(*a) {
                    let ashape = self.value(*a).shape().to_vec();
                    let c = *ashape.last().unwrap();
                    let w = end - start;
                    let g = accum(grads, *a, &ashape);
                    for (i, dr) in dy.data().chunks(w).enumerate() {
                        add_into(&mut g[i * c + start..i * c + end], dr);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = dy.cols();
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.value(p).shape().to_vec();
                    let w = *pshape.last().unwrap();
                    if self.wants(p) {
                        let g = accum(grads, p, &pshape);
                        for (i, gr) in g.chunks_mut(w).enumerate() {
                            add_into(gr, &dy.data()[i * total + offset..i * total + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.value(p).shape().to_vec();
                    let n: usize = pshape.iter().product();
                    if self.wants(p) {
                        add_into(accum(grads, p, &pshape), &dy.data()[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::Reshape(a) => {
                if self.wants(*a) {
                    let ashape = self.value(*a).shape().to_vec();
                    add_into(accum(grads, *a, &ashape), dy.data());
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let ashape = self.value(*a).shape().to_vec();
                    let d = dy.item();
                    for g in accum(grads, *a, &ashape) {
                        *g += d;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = y.cols();
                let gv = self.value(*gamma).data().to_vec();
                if self.wants(*gamma) {
                    let g = accum(grads, *gamma, &[c]);
                    for (dr, hr) in dy.data().chunks(c).zip(xhat.chunks(c)) {
                        for ((g, d), h) in g.iter_mut().zip(dr).zip(hr) {
                            *g += d * h;
                        }
                    }
                }
                if self.wants(*beta) {
                    let g = accum(grads, *beta, &[c]);
                    for dr in dy.data().chunks(c) {
                        add_into(g, dr);
                    }
                }
                if self.wants(*x) {
                    let xshape = self.value(*x).shape().to_vec();
                    let g = accum(grads, *x, &xshape);
                    let n = c as f64;
                    for (i, ((gr, dr), hr)) in g
                        .chunks_mut(c)
                        .zip(dy.data().chunks(c))
                        .zip(xhat.chunks(c))
                        .enumerate()
                    {
                        let dh: Vec<f64> = dr.iter().zip(&gv).map(|(d, w)| d * w).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((g, d), h) in gr.iter_mut().zip(&dh).zip(hr) {
                            *g += inv_std[i] * (d - mean_dh - h * mean_dh_h);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if self.wants(*logits) {
                    let lshape = self.value(*logits).shape().to_vec();
                    let c = *lshape.last().unwrap();
                    let scale = dy.item() / targets.len() as f64;
                    let g = accum(grads, *logits, &lshape);
                    for (i, (gr, pr)) in g.chunks_mut(c).zip(probs.chunks(c)).enumerate() {
                        for (j, (g, p)) in gr.iter_mut().zip(pr).enumerate() {
                            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                            *g += scale * (p - onehot);
                        }
                    }
                }
            }
            Op::BceWithLogits { logits, targets } => {
                if self.wants(*logits) {
                    let lv = self.value(*logits);
                    let lshape = lv.shape().to_vec();
                    let scale = dy.item() / targets.len() as f64;
                    let z = lv.data().to_vec();
                    let g = accum(grads, *logits, &lshape);
                    for ((g, z), t) in g.iter_mut().zip(&z).zip(targets) {
                        *g += scale * (sigmoid(*z) - t);
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn accum<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(shape))
        .data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zero_and_ln3() {
        let x = Tensor::vector(vec![0.0, 3f64.ln()]).unwrap();
        let mut g = Graph::new();
        let v = g.input(&x);
        let p = g.softmax(v).unwrap();
        let p = g.value(p).data();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_constant_is_uniform() {
        for c in [-7.5, 0.0, 3.25, 1e6] {
            let p = Tensor::vector(vec![c; 3]).unwrap().softmax().unwrap();
            for v in p.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = Tensor::vector(vec![1000.0, 0.0])
            .unwrap()
            .softmax()
            .unwrap();
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
        assert!(p.data()[1] < 1e-300 || p.data()[1] == 0.0);
    }

    #[test]
    fn relu_values() {
        let t = Tensor::vector(vec![-1.0, 2.0]).unwrap().relu();
        assert_eq!(t.data(), &[0.0, 2.0]);
    }

    #[test]
    fn symmetric_cross_entropy_is_ln2() {
        let l = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let mut g = Graph::new();
        let v = g.input(&l);
        let loss = g.cross_entropy(v, &[0]).unwrap();
        assert!((g.value(loss).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let l = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let mut g = Graph::new();
        let v = g.input(&l);
        assert!(matches!(g.cross_entropy(v, &[2]), Err(Error::Label(_))));
    }

    #[test]
    fn sum_of_matmul_gradient_is_ones_times_bt() {
        let a = Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = Tensor::from_rows(&[[1.0, -1.0], [0.5, 2.0], [3.0, 0.0]]).unwrap();
        let mut g = Graph::new();
        let (va, vb) = (g.param(&a), g.param(&b));
        let c = g.matmul(va, vb).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        let ones = Tensor::full(&[2, 2], 1.0);
        let expected = ones.matmul_nt(&b).unwrap();
        assert_eq!(grads.get(va).unwrap(), &expected);
    }

    #[test]
    fn constants_get_no_gradient() {
        let a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let mut g = Graph::new();
        let va = g.input(&a);
        let s = g.sum(va);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(va).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let mut g = Graph::new();
        let va = g.param(&a);
        assert!(g.backward(va).is_err());
    }
}
