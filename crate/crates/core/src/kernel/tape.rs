//! Recorded-graph reverse-mode differentiation over [`Matrix`] values.
//!
//! Each operation appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints. Only the operations the
//! codec needs are provided.

use std::collections::HashMap;

use super::matrix::axpy;
use super::{Matrix, ParamId, ParamStore};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    KeepRows(Var, usize),
    MeanSquare(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    /// A leaf that still receives an adjoint (visible through [`Gradients`]).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const)
    }

    /// Copies the value into a new leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        self.push(value, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    /// Adds a `1×c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a single row");
        assert_eq!(b.cols(), self.value(x).cols(), "bias width mismatch");
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            for (o, bi) in value.row_mut(r).iter_mut().zip(b.data()) {
                *o += bi;
            }
        }
        self.push(value, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v * s);
        self.push(value, Op::Scale(x, s))
    }

    /// Row-wise layer normalization with learned `1×c` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert_eq!(g.len(), cols, "layer norm scale width mismatch");
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(r);
            for (h, v) in xh.iter_mut().zip(row) {
                *h = (v - mean) * inv;
            }
            let o = out.row_mut(r);
            for j in 0..cols {
                o[j] = g[j] * xh[j] + b[j];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        self.push(value, Op::Gelu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        self.push(value, Op::Softplus(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let value = self.value(x).slice_cols(start, width);
        self.push(value, Op::SliceCols(x, start))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let value = self.value(x).slice_rows(start, end);
        self.push(value, Op::SliceRows(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hstack(&mats);
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::vstack(&mats);
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    /// Keeps the first `n` rows and zeroes the rest.
    pub fn keep_rows(&mut self, x: Var, n: usize) -> Var {
        let mut value = self.value(x).clone();
        let cols = value.cols();
        value.data_mut()[n * cols..].iter_mut().for_each(|v| *v = 0.0);
        self.push(value, Op::KeepRows(x, n))
    }

    /// Mean of squared entries, as a `1×1` node.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let value = m.sum_sq() / m.data().len() as f64;
        self.push(Matrix::filled(1, 1, value), Op::MeanSquare(x))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::argument("backward requires a scalar loss"));
        }
        if !lv.get(0, 0).is_finite() {
            return Err(Error::Training {
                seed: 0,
                step: 0,
                message: format!("non-finite loss {}", lv.get(0, 0)),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds the parameter adjoints into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (&id, &v) in &self.params {
            if let Some(g) = grads.get(v) {
                store.grad_mut(id).add_assign(g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, idx: usize, dy: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Const | Op::Param => {}
            Op::MatMul(a, b) => {
                let da = dy.matmul_nt(self.value(*b));
                let db = self.value(*a).matmul_tn(dy);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MatMulNT(a, b) => {
                let da = dy.matmul(self.value(*b));
                let db = dy.matmul_tn(self.value(*a));
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.map(|v| -v));
            }
            Op::AddRow(x, bias) => {
                accumulate(grads, *x, dy.clone());
                accumulate(grads, *bias, column_sums(dy));
            }
            Op::Scale(x, s) => accumulate(grads, *x, dy.map(|v| v * s)),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = dy.shape();
                let g = self.value(*gamma).data();
                let mut dgamma = Matrix::zeros(1, cols);
                let mut dx = Matrix::zeros(rows, cols);
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let dyr = dy.row(r);
                    let xh = xhat.row(r);
                    axpy_mul(dyr, xh, dgamma.data_mut());
                    for j in 0..cols {
                        dxhat[j] = dyr[j] * g[j];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                    let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>()
                        / cols as f64;
                    let inv = inv_std[r];
                    let out = dx.row_mut(r);
                    for j in 0..cols {
                        out[j] = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, column_sums(dy));
            }
            Op::Gelu(x) => {
                let dx = self.value(*x).zip_map(dy, |xv, d| d * gelu_grad(xv));
                accumulate(grads, *x, dx);
            }
            Op::Softplus(x) => {
                let dx = self.value(*x).zip_map(dy, |xv, d| d * sigmoid(xv));
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = dy.row(r);
                    let s: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for (o, (yi, di)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(dr)) {
                        *o = yi * (di - s);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Matrix::zeros(rows, cols);
                let w = dy.cols();
                for r in 0..rows {
                    dx.row_mut(r)[*start..*start + w].copy_from_slice(dy.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::SliceRows(x, start) => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Matrix::zeros(rows, cols);
                dx.data_mut()[start * cols..start * cols + dy.data().len()]
                    .copy_from_slice(dy.data());
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    accumulate(grads, p, dy.slice_cols(offset, w));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    accumulate(grads, p, dy.slice_rows(offset, offset + h));
                    offset += h;
                }
            }
            Op::KeepRows(x, n) => {
                let mut dx = dy.clone();
                let cols = dx.cols();
                dx.data_mut()[n * cols..].iter_mut().for_each(|v| *v = 0.0);
                accumulate(grads, *x, dx);
            }
            Op::MeanSquare(x) => {
                let xv = self.value(*x);
                let s = 2.0 * dy.get(0, 0) / xv.data().len() as f64;
                accumulate(grads, *x, xv.map(|v| v * s));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        axpy(1.0, m.row(r), out.data_mut());
    }
    out
}

fn axpy_mul(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += x * y;
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
