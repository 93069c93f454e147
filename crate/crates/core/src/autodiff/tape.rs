//! Define-by-run reverse-mode tape.
//!
//! Every forward operation appends a node holding its output value and the
//! handles of its inputs. [`Tape::backward`] walks the nodes once, in reverse
//! recording order, accumulating adjoints into a [`Gradients`] table.

use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row norms at or below this are treated as collapsed.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Boolean selection matrix used by the masked reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::contract("Mask::new", format!("{rows}x{cols} mask needs {} entries", rows * cols)));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    /// Everything except the diagonal.
    pub fn off_diagonal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| i != j)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    ScalarMul(Var, f64),
    Mul(Var, Var),
    MatMul(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    /// Saves the per-row norms.
    RowNormalize(Var, Vec<f64>),
    LogSumExp(Var, Option<Arc<Mask>>),
    MaskedSum(Var, Arc<Mask>),
    ReduceSum(Var),
    ReduceMean(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// How the right operand of a binary elementwise op lines up with the left.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Broadcast> {
    if lhs.shape() == rhs.shape() {
        Ok(Broadcast::Same)
    } else if rhs.numel() == 1 {
        Ok(Broadcast::Scalar)
    } else if lhs.shape().len() == 2 && rhs.shape() == [1, lhs.cols()] {
        Ok(Broadcast::Row)
    } else {
        Err(Error::contract(op, format!("cannot combine {:?} with {:?}", lhs.shape(), rhs.shape())))
    }
}

fn rhs_index(kind: Broadcast, idx: usize, cols: usize) -> usize {
    match kind {
        Broadcast::Same => idx,
        Broadcast::Row => idx % cols,
        Broadcast::Scalar => 0,
    }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::contract(op, format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// C (m x n) = A (m x k) * B (k x n), with explicit strides so transposed
/// operands need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass slices covering the strided extents; c is m x n row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Recorded computation. Build one per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// A trainable input: gradients are reported for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn elementwise2(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Broadcast)> {
        let (lhs, rhs) = (self.value(a), self.value(b));
        let kind = broadcast_kind(op, lhs, rhs)?;
        let cols = lhs.cols();
        let data = lhs
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, rhs.data()[rhs_index(kind, i, cols)]))
            .collect();
        Ok((Tensor::new(lhs.shape().to_vec(), data)?, kind))
    }

    /// `a + b`; `b` may be a `[1, cols]` row or a scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.elementwise2("add", a, b, |x, y| x + y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.elementwise2("sub", a, b, |x, y| x - y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.elementwise2("elementwise_mul", a, b, |x, y| x * y)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, k: f64) -> Result<Var> {
        let src = self.value(a);
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|x| x * k).collect())?;
        let rg = self.grad_any(&[a]);
        Ok(self.push(out, Op::ScalarMul(a, k), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = require_matrix("matmul", self.value(a))?;
        let (k2, n) = require_matrix("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::contract("matmul", format!("inner extents differ: {m}x{k} * {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (n, 1), &mut out, false);
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| x.max(0.0)).collect())?;
        let rg = self.grad_any(&[a]);
        Ok(self.push(out, Op::Relu(a), rg))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let data: Vec<f64> = src.data().iter().map(|x| x.exp()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::degenerate("exp", "result overflows f64"));
        }
        let out = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.grad_any(&[a]);
        Ok(self.push(out, Op::Exp(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if let Some(bad) = src.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::contract("log", format!("input must be strictly positive, found {bad}")));
        }
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|x| x.ln()).collect())?;
        let rg = self.grad_any(&[a]);
        Ok(self.push(out, Op::Log(a), rg))
    }

    /// Scales each row to unit Euclidean norm.
    ///
    /// Fails with a degenerate-input error when a row's norm is at most
    /// [`NORM_EPS`]; no epsilon is added.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = require_matrix("row_normalize", self.value(a))?;
        let src = self.value(a).data();
        let mut norms = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > NORM_EPS) {
                return Err(Error::degenerate("row_normalize", format!("row {i} has norm {norm:e}")));
            }
            out.extend(row.iter().map(|x| x / norm));
            norms.push(norm);
        }
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::RowNormalize(a, norms), rg))
    }

    /// Row-wise `log Σ_j exp(x_ij)` over the columns selected by `mask`
    /// (all columns when `None`). Output is `[rows, 1]`.
    pub fn log_sum_exp(&mut self, a: Var, mask: Option<Arc<Mask>>) -> Result<Var> {
        let (rows, cols) = require_matrix("log_sum_exp", self.value(a))?;
        if let Some(m) = &mask {
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::contract("log_sum_exp", "mask shape differs from input"));
            }
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let sel = |j: usize| mask.as_ref().is_none_or(|m| m.get(i, j));
            let max = (0..cols).filter(|&j| sel(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::degenerate("log_sum_exp", format!("row {i} selects no columns")));
            }
            let sum: f64 = (0..cols).filter(|&j| sel(j)).map(|j| (row[j] - max).exp()).sum();
            out.push(max + sum.ln());
        }
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::matrix(rows, 1, out)?, Op::LogSumExp(a, mask), rg))
    }

    /// Row-wise sum of the entries selected by `mask`. Output is `[rows, 1]`.
    pub fn masked_sum(&mut self, a: Var, mask: Arc<Mask>) -> Result<Var> {
        let (rows, cols) = require_matrix("masked_sum", self.value(a))?;
        if mask.rows() != rows || mask.cols() != cols {
            return Err(Error::contract("masked_sum", "mask shape differs from input"));
        }
        let src = self.value(a).data();
        let out = (0..rows)
            .map(|i| {
                let row = &src[i * cols..(i + 1) * cols];
                row.iter().zip(mask.row(i)).filter(|(_, &b)| b).map(|(x, _)| x).sum()
            })
            .collect();
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::matrix(rows, 1, out)?, Op::MaskedSum(a, mask), rg))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::ReduceSum(a), rg))
    }

    pub fn reduce_mean(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let s = src.data().iter().sum::<f64>() / src.numel() as f64;
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::ReduceMean(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = require_matrix("transpose", self.value(a))?;
        let src = self.value(a).data();
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = src[i * cols + j];
            }
        }
        let rg = self.grad_any(&[a]);
        Ok(self.push(Tensor::matrix(cols, rows, out)?, Op::Transpose(a), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::contract("concat_rows", "no inputs"))?;
        let (_, cols) = require_matrix("concat_rows", self.value(*first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = require_matrix("concat_rows", self.value(p))?;
            if c != cols {
                return Err(Error::contract("concat_rows", format!("column count {c} differs from {cols}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.grad_any(parts);
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Reverse pass from a one-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(Error::contract("backward", format!("root must be a scalar, got shape {:?}", root_val.shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let leaves = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => Some(g),
                _ => None,
            })
            .collect();
        Ok(Gradients { shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(), grads: leaves })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let slot = grads[target.0].get_or_insert_with(|| vec![0.0; self.nodes[target.0].value.numel()]);
        f(slot);
    }

    fn accumulate_broadcast(&self, grads: &mut [Option<Vec<f64>>], target: Var, lhs: &Tensor, g: &[f64], scale: impl Fn(usize) -> f64) {
        let kind = broadcast_kind("backward", lhs, self.value(target)).expect("shape checked in forward");
        let cols = lhs.cols();
        self.accumulate(grads, target, |acc| {
            for (i, gi) in g.iter().enumerate() {
                acc[rhs_index(kind, i, cols)] += gi * scale(i);
            }
        });
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |acc| acc.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
                self.accumulate_broadcast(grads, *b, self.value(*a), g, |_| 1.0);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |acc| acc.iter_mut().zip(g).for_each(|(x, gi)| *x += gi));
                self.accumulate_broadcast(grads, *b, self.value(*a), g, |_| -1.0);
            }
            Op::ScalarMul(a, k) => {
                self.accumulate(grads, *a, |acc| acc.iter_mut().zip(g).for_each(|(x, gi)| *x += gi * k));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let kind = broadcast_kind("backward", av, bv).expect("shape checked in forward");
                let cols = av.cols();
                self.accumulate(grads, *a, |acc| {
                    for (i, x) in acc.iter_mut().enumerate() {
                        *x += g[i] * bv.data()[rhs_index(kind, i, cols)];
                    }
                });
                self.accumulate_broadcast(grads, *b, av, g, |i| av.data()[i]);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                // dA = G Bᵀ, dB = Aᵀ G
                self.accumulate(grads, *a, |acc| gemm(m, n, k, g, (n, 1), bv.data(), (1, n), acc, true));
                self.accumulate(grads, *b, |acc| gemm(k, m, n, av.data(), (1, k), g, (n, 1), acc, true));
            }
            Op::Relu(a) => {
                let src = self.value(*a).data();
                self.accumulate(grads, *a, |acc| {
                    for ((x, gi), s) in acc.iter_mut().zip(g).zip(src) {
                        if *s > 0.0 {
                            *x += gi;
                        }
                    }
                });
            }
            Op::Exp(a) => {
                self.accumulate(grads, *a, |acc| {
                    acc.iter_mut().zip(g).zip(out.data()).for_each(|((x, gi), y)| *x += gi * y)
                });
            }
            Op::Log(a) => {
                let src = self.value(*a).data();
                self.accumulate(grads, *a, |acc| acc.iter_mut().zip(g).zip(src).for_each(|((x, gi), s)| *x += gi / s));
            }
            Op::RowNormalize(a, norms) => {
                let cols = out.cols();
                self.accumulate(grads, *a, |acc| {
                    for (i, norm) in norms.iter().enumerate() {
                        let y = out.row(i);
                        let gr = &g[i * cols..(i + 1) * cols];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            acc[i * cols + j] += (gr[j] - y[j] * dot) / norm;
                        }
                    }
                });
            }
            Op::LogSumExp(a, mask) => {
                let src = self.value(*a);
                let cols = src.cols();
                self.accumulate(grads, *a, |acc| {
                    for i in 0..src.rows() {
                        let lse = out.data()[i];
                        for j in 0..cols {
                            if mask.as_ref().is_none_or(|m| m.get(i, j)) {
                                acc[i * cols + j] += g[i] * (src.data()[i * cols + j] - lse).exp();
                            }
                        }
                    }
                });
            }
            Op::MaskedSum(a, mask) => {
                let cols = mask.cols();
                self.accumulate(grads, *a, |acc| {
                    for i in 0..mask.rows() {
                        for (j, &b) in mask.row(i).iter().enumerate() {
                            if b {
                                acc[i * cols + j] += g[i];
                            }
                        }
                    }
                });
            }
            Op::ReduceSum(a) => {
                self.accumulate(grads, *a, |acc| acc.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::ReduceMean(a) => {
                let n = self.value(*a).numel() as f64;
                self.accumulate(grads, *a, |acc| acc.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::Transpose(a) => {
                let (rows, cols) = (out.shape()[0], out.shape()[1]);
                // out is (rows x cols); the input is (cols x rows)
                self.accumulate(grads, *a, |acc| {
                    for i in 0..rows {
                        for j in 0..cols {
                            acc[j * rows + i] += g[i * cols + j];
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).numel();
                    let slice = &g[offset..offset + n];
                    self.accumulate(grads, *p, |acc| acc.iter_mut().zip(slice).for_each(|(x, gi)| *x += gi));
                    offset += n;
                }
            }
        }
    }
}

/// Adjoints of the trainable leaves reachable from a backward root.
#[derive(Debug, Clone)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a trainable leaf, or `None` if the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0)?.as_deref()
    }

    pub fn tensor(&self, v: Var) -> Option<Tensor> {
        let g = self.get(v)?;
        Tensor::new(self.shapes[v.0].clone(), g.to_vec()).ok()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0)?.take()
    }
}
