//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Tape`] owns the values produced during one forward pass. Operations
//! append nodes in topological order; [`Tape::backward`] walks the record in
//! exact reverse order, accumulating gradients additively into every node
//! that requires them. Tensors on a tape are never mutated in place.
//!
//! Parameters live outside the tape as plain [`Matrix`] values; a training
//! step leases them onto a fresh tape with [`Tape::leaf_grad`], runs the
//! forward pass, calls `backward`, and harvests gradients with
//! [`Tape::grad`].

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Guard against division by zero in row normalization; rows with a norm at
/// or below this are mapped to zero rows.
const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    /// `broadcast` marks a 1 x cols bias added to every row.
    Add { a: usize, b: usize, broadcast: bool },
    Mul(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    RowMean(usize),
    MeanRows(usize),
    ConcatRows(Vec<usize>),
    ScalarMul(usize, f64),
    RowL2Normalize { a: usize, norms: Vec<f64> },
    StopGradient,
    Transpose(usize),
}

struct Node {
    value: Matrix,
    /// Accumulated gradient; persists across `backward` calls.
    grad: Option<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Recorded forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Matrix, requires_grad: bool, op: Op) -> Tensor {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor { id: nodes.len() - 1 }
    }

    fn requires(&self, t: Tensor) -> bool {
        self.nodes.borrow()[t.id].requires_grad
    }

    /// Constant input; gradients never flow into it.
    pub fn leaf(&self, value: Matrix) -> Tensor {
        self.push(value, false, Op::Leaf)
    }

    /// Differentiable input (a leased parameter).
    pub fn leaf_grad(&self, value: Matrix) -> Tensor {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, t: Tensor) -> Matrix {
        self.nodes.borrow()[t.id].value.clone()
    }

    pub fn shape(&self, t: Tensor) -> (usize, usize) {
        self.nodes.borrow()[t.id].value.shape()
    }

    /// Value of a 1x1 tensor.
    pub fn scalar_value(&self, t: Tensor) -> Result<f64> {
        let nodes = self.nodes.borrow();
        let v = &nodes[t.id].value;
        if v.shape() != (1, 1) {
            return Err(Error::shape("scalar_value", v.shape(), (1, 1)));
        }
        Ok(v.get(0, 0))
    }

    /// Accumulated gradient of `t`, if any backward pass reached it.
    pub fn grad(&self, t: Tensor) -> Option<Matrix> {
        self.nodes.borrow()[t.id].grad.clone()
    }

    fn with_value<R>(&self, t: Tensor, f: impl FnOnce(&Matrix) -> R) -> R {
        f(&self.nodes.borrow()[t.id].value)
    }

    // ---- recorded operations ----

    pub fn matmul(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = {
            let nodes = self.nodes.borrow();
            nodes[a.id].value.matmul(&nodes[b.id].value)?
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::Matmul(a.id, b.id)))
    }

    /// Elementwise add; `b` may also be a 1 x cols bias broadcast across rows.
    pub fn add(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (out, broadcast) = {
            let nodes = self.nodes.borrow();
            let (va, vb) = (&nodes[a.id].value, &nodes[b.id].value);
            if va.shape() == vb.shape() {
                (va.add(vb)?, false)
            } else if vb.rows() == 1 && vb.cols() == va.cols() {
                let mut out = va.clone();
                for r in 0..out.rows() {
                    for c in 0..out.cols() {
                        out.set(r, c, out.get(r, c) + vb.get(0, c));
                    }
                }
                (out, true)
            } else {
                return Err(Error::shape("add", va.shape(), vb.shape()));
            }
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::Add { a: a.id, b: b.id, broadcast }))
    }

    /// `a - b`, composed from scalar_mul and add.
    pub fn sub(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let nb = self.scalar_mul(b, -1.0);
        self.add(a, nb)
    }

    pub fn elementwise_mul(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let out = {
            let nodes = self.nodes.borrow();
            nodes[a.id].value.hadamard(&nodes[b.id].value)?
        };
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, rg, Op::Mul(a.id, b.id)))
    }

    pub fn relu(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| v.map(|x| x.max(0.0)));
        let rg = self.requires(a);
        self.push(out, rg, Op::Relu(a.id))
    }

    pub fn exp(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| v.map(f64::exp));
        let rg = self.requires(a);
        self.push(out, rg, Op::Exp(a.id))
    }

    pub fn log(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| v.map(f64::ln));
        let rg = self.requires(a);
        self.push(out, rg, Op::Log(a.id))
    }

    /// Full sum, 1x1 output.
    pub fn sum(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| Matrix::filled(1, 1, v.sum()));
        let rg = self.requires(a);
        self.push(out, rg, Op::Sum(a.id))
    }

    /// Full mean, 1x1 output.
    pub fn mean(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| {
            Matrix::filled(1, 1, v.sum() / (v.rows() * v.cols()) as f64)
        });
        let rg = self.requires(a);
        self.push(out, rg, Op::Mean(a.id))
    }

    /// Per-row sum, rows x 1 output.
    pub fn row_sum(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| {
            let mut out = Matrix::zeros(v.rows(), 1);
            for r in 0..v.rows() {
                out.set(r, 0, v.row(r).iter().sum());
            }
            out
        });
        let rg = self.requires(a);
        self.push(out, rg, Op::RowSum(a.id))
    }

    /// Per-row mean, rows x 1 output.
    pub fn row_mean(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| {
            let mut out = Matrix::zeros(v.rows(), 1);
            for r in 0..v.rows() {
                out.set(r, 0, v.row(r).iter().sum::<f64>() / v.cols() as f64);
            }
            out
        });
        let rg = self.requires(a);
        self.push(out, rg, Op::RowMean(a.id))
    }

    /// Column means across rows, 1 x cols output (average pooling).
    pub fn mean_rows(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| {
            let mut out = Matrix::zeros(1, v.cols());
            for r in 0..v.rows() {
                for c in 0..v.cols() {
                    out.set(0, c, out.get(0, c) + v.get(r, c));
                }
            }
            out.scale(1.0 / v.rows() as f64)
        });
        let rg = self.requires(a);
        self.push(out, rg, Op::MeanRows(a.id))
    }

    /// Stack inputs vertically; all must share a column count.
    pub fn concat_rows(&self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Config("concat_rows needs at least one input".into()));
        }
        let out = {
            let nodes = self.nodes.borrow();
            let cols = nodes[parts[0].id].value.cols();
            let rows: usize = parts.iter().map(|t| nodes[t.id].value.rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for t in parts {
                let v = &nodes[t.id].value;
                if v.cols() != cols {
                    return Err(Error::shape("concat_rows", (rows, cols), v.shape()));
                }
                data.extend_from_slice(v.data());
            }
            Matrix::from_vec(rows, cols, data)?
        };
        let rg = parts.iter().any(|t| self.requires(*t));
        Ok(self.push(out, rg, Op::ConcatRows(parts.iter().map(|t| t.id).collect())))
    }

    pub fn scalar_mul(&self, a: Tensor, k: f64) -> Tensor {
        let out = self.with_value(a, |v| v.scale(k));
        let rg = self.requires(a);
        self.push(out, rg, Op::ScalarMul(a.id, k))
    }

    /// Normalize each row to unit L2 norm. Rows with norm <= 1e-12 map to
    /// zero rows; callers that must reject such rows check beforehand.
    pub fn row_l2_normalize(&self, a: Tensor) -> Tensor {
        let (out, norms) = self.with_value(a, |v| {
            let mut out = v.clone();
            let mut norms = Vec::with_capacity(v.rows());
            for r in 0..v.rows() {
                let n = v.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
                let denom = n.max(NORM_EPS);
                norms.push(denom);
                for c in 0..v.cols() {
                    out.set(r, c, v.get(r, c) / denom);
                }
            }
            (out, norms)
        });
        let rg = self.requires(a);
        self.push(out, rg, Op::RowL2Normalize { a: a.id, norms })
    }

    /// Forward identity whose backward contributes exactly zero to every
    /// ancestor of `a`.
    pub fn stop_gradient(&self, a: Tensor) -> Tensor {
        let out = self.value(a);
        self.push(out, false, Op::StopGradient)
    }

    pub fn transpose(&self, a: Tensor) -> Tensor {
        let out = self.with_value(a, |v| v.transpose());
        let rg = self.requires(a);
        self.push(out, rg, Op::Transpose(a.id))
    }

    /// Numerically stable per-row log-sum-exp, rows x 1 output.
    ///
    /// The row maxima are subtracted as detached constants; the result value
    /// and gradient are exact because log-sum-exp is shift-invariant.
    pub fn log_sum_exp_rows(&self, a: Tensor) -> Result<Tensor> {
        let (rows, cols) = self.shape(a);
        let maxes: Vec<f64> = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.id].value;
            (0..rows)
                .map(|r| v.row(r).iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
                .collect()
        };
        let mut shift = Matrix::zeros(rows, cols);
        let mut shift_col = Matrix::zeros(rows, 1);
        for r in 0..rows {
            shift_col.set(r, 0, maxes[r]);
            for c in 0..cols {
                shift.set(r, c, maxes[r]);
            }
        }
        let shifted = self.sub(a, self.leaf(shift))?;
        let lse = self.log(self.row_sum(self.exp(shifted)));
        self.add(lse, self.leaf(shift_col))
    }

    /// Backpropagate from a scalar loss. Gradients accumulate additively
    /// into every node reached; repeated calls without zeroing accumulate.
    pub fn backward(&self, loss: Tensor) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss.id].value.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                nodes[loss.id].value.shape(),
                (1, 1),
            ));
        }

        // Scratch gradients for this pass only; merged into persistent node
        // gradients at the end so repeated backward calls accumulate.
        let mut scratch: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        scratch[loss.id] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=loss.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(gout) = scratch[id].take() else {
                continue;
            };

            {
                let mut accum = |slot: usize, contribution: Matrix| {
                    match &mut scratch[slot] {
                        Some(g) => g.accumulate(&contribution).expect("gradient shape"),
                        none => *none = Some(contribution),
                    }
                };

                match &nodes[id].op {
                    Op::Leaf | Op::StopGradient => {}
                    Op::Matmul(a, b) => {
                        let (a, b) = (*a, *b);
                        if nodes[a].requires_grad {
                            let da = gout.matmul(&nodes[b].value.transpose())?;
                            accum(a, da);
                        }
                        if nodes[b].requires_grad {
                            let db = nodes[a].value.transpose().matmul(&gout)?;
                            accum(b, db);
                        }
                    }
                    Op::Add { a, b, broadcast } => {
                        let (a, b, broadcast) = (*a, *b, *broadcast);
                        if nodes[a].requires_grad {
                            accum(a, gout.clone());
                        }
                        if nodes[b].requires_grad {
                            if broadcast {
                                let mut gb = Matrix::zeros(1, gout.cols());
                                for r in 0..gout.rows() {
                                    for c in 0..gout.cols() {
                                        gb.set(0, c, gb.get(0, c) + gout.get(r, c));
                                    }
                                }
                                accum(b, gb);
                            } else {
                                accum(b, gout.clone());
                            }
                        }
                    }
                    Op::Mul(a, b) => {
                        let (a, b) = (*a, *b);
                        if nodes[a].requires_grad {
                            let g = gout.hadamard(&nodes[b].value)?;
                            accum(a, g);
                        }
                        if nodes[b].requires_grad {
                            let g = gout.hadamard(&nodes[a].value)?;
                            accum(b, g);
                        }
                    }
                    Op::Relu(a) => {
                        let a = *a;
                        // Subgradient 0 at exactly 0.
                        let mask = nodes[a].value.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                        accum(a, gout.hadamard(&mask)?);
                    }
                    Op::Exp(a) => {
                        let a = *a;
                        let g = gout.hadamard(&nodes[id].value)?;
                        accum(a, g);
                    }
                    Op::Log(a) => {
                        let a = *a;
                        let inv = nodes[a].value.map(|x| 1.0 / x);
                        accum(a, gout.hadamard(&inv)?);
                    }
                    Op::Sum(a) => {
                        let a = *a;
                        let (r, c) = nodes[a].value.shape();
                        accum(a, Matrix::filled(r, c, gout.get(0, 0)));
                    }
                    Op::Mean(a) => {
                        let a = *a;
                        let (r, c) = nodes[a].value.shape();
                        accum(a, Matrix::filled(r, c, gout.get(0, 0) / (r * c) as f64));
                    }
                    Op::RowSum(a) => {
                        let a = *a;
                        let (r, c) = nodes[a].value.shape();
                        let mut g = Matrix::zeros(r, c);
                        for i in 0..r {
                            for j in 0..c {
                                g.set(i, j, gout.get(i, 0));
                            }
                        }
                        accum(a, g);
                    }
                    Op::RowMean(a) => {
                        let a = *a;
                        let (r, c) = nodes[a].value.shape();
                        let mut g = Matrix::zeros(r, c);
                        for i in 0..r {
                            for j in 0..c {
                                g.set(i, j, gout.get(i, 0) / c as f64);
                            }
                        }
                        accum(a, g);
                    }
                    Op::MeanRows(a) => {
                        let a = *a;
                        let (r, c) = nodes[a].value.shape();
                        let mut g = Matrix::zeros(r, c);
                        for i in 0..r {
                            for j in 0..c {
                                g.set(i, j, gout.get(0, j) / r as f64);
                            }
                        }
                        accum(a, g);
                    }
                    Op::ConcatRows(parts) => {
                        let parts = parts.clone();
                        let cols = gout.cols();
                        let mut offset = 0;
                        for p in parts {
                            let pr = nodes[p].value.rows();
                            if nodes[p].requires_grad {
                                let mut g = Matrix::zeros(pr, cols);
                                for i in 0..pr {
                                    for j in 0..cols {
                                        g.set(i, j, gout.get(offset + i, j));
                                    }
                                }
                                accum(p, g);
                            }
                            offset += pr;
                        }
                    }
                    Op::ScalarMul(a, k) => {
                        let (a, k) = (*a, *k);
                        accum(a, gout.scale(k));
                    }
                    Op::RowL2Normalize { a, norms } => {
                        let (a, norms) = (*a, norms.clone());
                        let y = &nodes[id].value;
                        let (r, c) = y.shape();
                        let mut g = Matrix::zeros(r, c);
                        for i in 0..r {
                            let dot: f64 = (0..c).map(|j| gout.get(i, j) * y.get(i, j)).sum();
                            for j in 0..c {
                                g.set(i, j, (gout.get(i, j) - dot * y.get(i, j)) / norms[i]);
                            }
                        }
                        accum(a, g);
                    }
                    Op::Transpose(a) => {
                        let a = *a;
                        accum(a, gout.transpose());
                    }
                }
            }

            scratch[id] = Some(gout);
        }

        for (node, s) in nodes.iter_mut().zip(scratch) {
            if let Some(s) = s {
                match &mut node.grad {
                    Some(g) => g.accumulate(&s)?,
                    none => *none = Some(s),
                }
            }
        }
        Ok(())
    }
}
