//! Arena tape for reverse-mode differentiation over [`Matrix`] values.
//!
//! Nodes are appended in evaluation order, so the arena order is already a
//! topological order; [`Graph::backward`] walks it once in reverse.

use crate::error::{shape_err, Error, Result};

use super::matrix::{gemm_nt_acc, gemm_tn_acc, Matrix};
use super::softmax_cross_entropy;

/// Handle to a node of a [`Graph`].
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a[n×c] + b[1×c]` broadcast over rows.
    AddRow(Var, Var),
    Affine { x: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    SliceRow { x: Var, row: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    Sum(Var),
    /// Mean cross-entropy over rows; `probs` cached from the forward pass.
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Matrix },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Computation graph recorded during a forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not influence the root.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Matrix {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
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

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (va, vb) = (self.value(a), self.value(b));
        va.check_same(vb, what)?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Matrix::from_raw(va.rows(), va.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(row));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return shape_err(format!(
                "add_row {}x{} with {}x{}",
                va.rows(),
                va.cols(),
                vb.rows(),
                vb.cols()
            ));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Op::AddRow(a, row), value, rg))
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(x);
        self.push(Op::Affine { x, scale }, value, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(Op::Sigmoid(x), value, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        let rg = self.rg(x);
        self.push(Op::Tanh(x), value, rg)
    }

    pub fn slice_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let v = self.value(x);
        if row >= v.rows() {
            return Err(Error::Index(format!("row {row} of {} rows", v.rows())));
        }
        let value = Matrix::from_raw(1, v.cols(), v.row(row).to_vec());
        let rg = self.rg(x);
        Ok(self.push(Op::SliceRow { x, row }, value, rg))
    }

    /// Columns `start..start+len` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        if start + len > v.cols() {
            return Err(Error::Index(format!(
                "columns {start}..{} of {}",
                start + len,
                v.cols()
            )));
        }
        let mut data = Vec::with_capacity(v.rows() * len);
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let value = Matrix::from_raw(v.rows(), len, data);
        let rg = self.rg(x);
        Ok(self.push(Op::SliceCols { x, start }, value, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of zero parts");
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return shape_err(format!("concat {} cols with {cols}", v.cols()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), Matrix::from_raw(rows, cols, data), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::from_raw(1, 1, vec![self.value(x).sum()]);
        let rg = self.rg(x);
        self.push(Op::Sum(x), value, rg)
    }

    /// Mean over rows of the softmax cross-entropy of `logits[n×C]` against
    /// one label per row.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        if labels.len() != v.rows() {
            return shape_err(format!("{} labels for {} rows", labels.len(), v.rows()));
        }
        let mut probs = Matrix::zeros(v.rows(), v.cols());
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let (loss, grad) = softmax_cross_entropy(v.row(r), label)?;
            total += loss;
            // grad = softmax - onehot; store the softmax part.
            let row = probs.row_mut(r);
            row.copy_from_slice(&grad);
            row[label] += 1.0;
        }
        let value = Matrix::from_raw(1, 1, vec![total / labels.len().max(1) as f64]);
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            value,
            rg,
        ))
    }

    /// Reverse accumulation from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            let (r, c) = self.value(root).shape();
            return Err(Error::Contract(format!("backward from non-scalar {r}x{c} root")));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, contrib: impl FnOnce(&mut Matrix)) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let acc = slot.get_or_insert_with(|| {
            let (r, c) = self.shape(v);
            Matrix::zeros(r, c)
        });
        contrib(acc);
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                self.accumulate(grads, *a, |acc| gemm_nt_acc(g.data(), vb.data(), acc.data_mut(), m, k, n));
                self.accumulate(grads, *b, |acc| gemm_tn_acc(va.data(), g.data(), acc.data_mut(), m, k, n));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g.data(), 1.0));
                self.accumulate(grads, *b, |acc| add_into(acc, g.data(), 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g.data(), 1.0));
                self.accumulate(grads, *b, |acc| add_into(acc, g.data(), -1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |acc| {
                    for ((o, gi), bi) in acc.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *o += gi * bi;
                    }
                });
                self.accumulate(grads, *b, |acc| {
                    for ((o, gi), ai) in acc.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o += gi * ai;
                    }
                });
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g.data(), 1.0));
                self.accumulate(grads, *row, |acc| {
                    for r in 0..g.rows() {
                        for (o, gi) in acc.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Affine { x, scale } => {
                self.accumulate(grads, *x, |acc| add_into(acc, g.data(), *scale));
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                self.accumulate(grads, *x, |acc| {
                    for ((o, gi), yi) in acc.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                self.accumulate(grads, *x, |acc| {
                    for ((o, gi), yi) in acc.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::SliceRow { x, row } => {
                self.accumulate(grads, *x, |acc| {
                    for (o, gi) in acc.row_mut(*row).iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let len = g.cols();
                self.accumulate(grads, *x, |acc| {
                    for r in 0..g.rows() {
                        for (o, gi) in acc.row_mut(r)[*start..*start + len].iter_mut().zip(g.row(r)) {
                            *o += gi;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    let chunk = &g.data()[offset * cols..(offset + rows) * cols];
                    self.accumulate(grads, p, |acc| add_into(acc, chunk, 1.0));
                    offset += rows;
                }
            }
            Op::Sum(x) => {
                let s = g.data()[0];
                self.accumulate(grads, *x, |acc| {
                    for o in acc.data_mut() {
                        *o += s;
                    }
                });
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let scale = g.data()[0] / labels.len().max(1) as f64;
                self.accumulate(grads, *logits, |acc| {
                    for (r, &label) in labels.iter().enumerate() {
                        let out = acc.row_mut(r);
                        for (c, (o, p)) in out.iter_mut().zip(probs.row(r)).enumerate() {
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            *o += scale * (p - onehot);
                        }
                    }
                });
            }
        }
    }
}

fn add_into(acc: &mut Matrix, g: &[f64], scale: f64) {
    for (o, gi) in acc.data_mut().iter_mut().zip(g) {
        *o += scale * gi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
