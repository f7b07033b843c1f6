//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] is an append-only arena of nodes. Every operation pushes a node
//! whose inputs are earlier nodes, so the arena is always in topological
//! order and [`Tape::backward`] is a single reverse sweep that visits each
//! node once.
//!
//! Leaves are either trainable ([`Tape::param`]) or constant
//! ([`Tape::constant`]). Nodes that do not depend on any trainable leaf are
//! skipped during the backward sweep.
//!
//! ```
//! use kgstale_core::numcore::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
//! let loss = tape.sum(w);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w), Matrix::filled(2, 2, 1.0));
//! ```

use std::sync::Arc;

use super::matrix::{gemm, softmax_in_place, MatRef, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
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
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    PRelu(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    RowL1(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    GatherRows(Var, Arc<[usize]>),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Arc<[usize]>),
    SegmentWeightedSum {
        values: Var,
        weights: Var,
        src: Arc<[usize]>,
        offsets: Arc<[usize]>,
    },
    SegmentScatter {
        weights: Var,
        cols: Arc<[usize]>,
        offsets: Arc<[usize]>,
    },
    BceWithLogits(Var, Arc<[f64]>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Recording of a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the trainable leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` was not reached from the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`; unreachable leaves get an all-zero matrix.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn dim_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let g = self.needs(a);
        self.push(value, Op::Transpose(a), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), g))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb != (1, sa.1) {
            return Err(dim_err("add_row", sa, sb));
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).data().to_vec();
        for r in 0..sa.0 {
            for (x, y) in value.row_mut(r).iter_mut().zip(&row) {
                *x += y;
            }
        }
        let g = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::AddRow(a, b), g))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let g = self.needs(a);
        self.push(value, Op::Scale(a, c), g)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let g = self.needs(a);
        self.push(value, Op::LeakyRelu(a, slope), g)
    }

    /// Leaky ReLU whose negative slope is the 1x1 node `slope`.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        if self.shape(slope) != (1, 1) {
            return Err(dim_err("prelu slope", self.shape(slope), (1, 1)));
        }
        let s = self.scalar(slope);
        let value = self.value(a).map(|x| if x > 0.0 { x } else { s * x });
        let g = self.needs(a) || self.needs(slope);
        Ok(self.push(value, Op::PRelu(a, slope), g))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let g = self.needs(a);
        self.push(value, Op::Relu(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let g = self.needs(a);
        self.push(value, Op::Sigmoid(a), g)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let g = self.needs(a);
        self.push(value, Op::Softplus(a), g)
    }

    /// L1 norm of each row, as an `m x 1` column.
    pub fn row_l1(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let sums: Vec<f64> = (0..m.rows())
            .map(|r| m.row(r).iter().map(|x| x.abs()).sum())
            .collect();
        let value = Matrix::col_vector(&sums);
        let g = self.needs(a);
        self.push(value, Op::RowL1(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let g = self.needs(a);
        self.push(value, Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Error::Dimension("mean of an empty matrix".into()));
        }
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        let g = self.needs(a);
        Ok(self.push(value, Op::Mean(a), g))
    }

    /// Column-wise mean over rows, as a `1 x n` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::Dimension("mean over zero rows".into()));
        }
        let mut out = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (o, x) in out.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        let n = m.rows() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let value = Matrix::row_vector(&out);
        let g = self.needs(a);
        Ok(self.push(value, Op::MeanRows(a), g))
    }

    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Arc<[usize]>>) -> Result<Var> {
        let idx: Arc<[usize]> = idx.into();
        let m = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Dimension(format!(
                "gather of row {bad} from a {}x{} matrix",
                m.rows(),
                m.cols()
            )));
        }
        let value = m.select_rows(&idx);
        let g = self.needs(a);
        Ok(self.push(value, Op::GatherRows(a, idx), g))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.value(a);
        if start > end || end > m.rows() {
            return Err(Error::Dimension(format!(
                "row slice {start}..{end} of a {}x{} matrix",
                m.rows(),
                m.cols()
            )));
        }
        let value = Matrix::from_vec(
            end - start,
            m.cols(),
            m.data()[start * m.cols()..end * m.cols()].to_vec(),
        )?;
        let g = self.needs(a);
        Ok(self.push(value, Op::SliceRows(a, start), g))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hcat(&mats)?;
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), g))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::vcat(&mats)?;
        let g = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), g))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).softmax_rows()?;
        let g = self.needs(a);
        Ok(self.push(value, Op::SoftmaxRows(a), g))
    }

    /// Softmax of an `m x 1` column within contiguous segments.
    ///
    /// Segment `i` covers rows `offsets[i]..offsets[i + 1]`; empty segments
    /// are allowed and produce nothing.
    pub fn segment_softmax(&mut self, a: Var, offsets: Arc<[usize]>) -> Result<Var> {
        let m = self.value(a);
        check_offsets(&offsets, m.rows())?;
        if m.cols() != 1 {
            return Err(dim_err("segment_softmax input", m.shape(), (m.rows(), 1)));
        }
        let mut value = m.clone();
        for w in offsets.windows(2) {
            if w[1] > w[0] {
                softmax_in_place(&mut value.data_mut()[w[0]..w[1]]);
            }
        }
        let g = self.needs(a);
        Ok(self.push(value, Op::SegmentSoftmax(a, offsets), g))
    }

    /// Weighted segment sums: output row `i` is
    /// `sum_{p in segment i} weights[p] * values[src[p]]`.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        src: Arc<[usize]>,
        offsets: Arc<[usize]>,
    ) -> Result<Var> {
        let (vm, wm) = (self.value(values), self.value(weights));
        check_offsets(&offsets, src.len())?;
        if wm.shape() != (src.len(), 1) {
            return Err(dim_err("segment weights", wm.shape(), (src.len(), 1)));
        }
        if let Some(&bad) = src.iter().find(|&&i| i >= vm.rows()) {
            return Err(Error::Dimension(format!(
                "segment source row {bad} out of {} rows",
                vm.rows()
            )));
        }
        let cols = vm.cols();
        let mut out = Matrix::zeros(offsets.len() - 1, cols);
        for (seg, w) in offsets.windows(2).enumerate() {
            let dst = out.row_mut(seg);
            for p in w[0]..w[1] {
                let a = wm.data()[p];
                for (d, x) in dst.iter_mut().zip(vm.row(src[p])) {
                    *d += a * x;
                }
            }
        }
        let g = self.needs(values) || self.needs(weights);
        Ok(self.push(
            out,
            Op::SegmentWeightedSum {
                values,
                weights,
                src,
                offsets,
            },
            g,
        ))
    }

    /// Dense `segments x width` matrix with `weights[p]` added at row
    /// `seg(p)`, column `cols[p]`. Multiplying it by a table equals
    /// [`Tape::segment_weighted_sum`] over `cols` without the per-slot rows.
    pub fn segment_scatter(
        &mut self,
        weights: Var,
        cols: Arc<[usize]>,
        offsets: Arc<[usize]>,
        width: usize,
    ) -> Result<Var> {
        let wm = self.value(weights);
        check_offsets(&offsets, cols.len())?;
        if wm.shape() != (cols.len(), 1) {
            return Err(dim_err("scatter weights", wm.shape(), (cols.len(), 1)));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::Dimension(format!("scatter column {bad} out of {width}")));
        }
        let mut out = Matrix::zeros(offsets.len() - 1, width);
        for (seg, w) in offsets.windows(2).enumerate() {
            let row = out.row_mut(seg);
            for p in w[0]..w[1] {
                row[cols[p]] += wm.data()[p];
            }
        }
        let g = self.needs(weights);
        Ok(self.push(out, Op::SegmentScatter { weights, cols, offsets }, g))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: impl Into<Arc<[f64]>>) -> Result<Var> {
        let targets: Arc<[f64]> = targets.into();
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() != targets.len() || targets.is_empty() {
            return Err(dim_err("bce logits", z.shape(), (targets.len(), 1)));
        }
        let n = targets.len() as f64;
        let total: f64 = z
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| softplus(x) - y * x)
            .sum();
        let g = self.needs(logits);
        Ok(self.push(
            Matrix::scalar(total / n),
            Op::BceWithLogits(logits, targets),
            g,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Matrix::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, dy, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !(node.needs_grad && matches!(node.op, Op::Leaf)) {
                *g = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, op: &Op, y: &Matrix, dy: Matrix, grads: &mut [Option<Matrix>]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(a) {
                    let slot = slot(grads, a, self.shape(a));
                    gemm(1.0, MatRef::normal(&dy), MatRef::t(self.value(b)), 1.0, slot);
                }
                if self.needs(b) {
                    let slot = slot(grads, b, self.shape(b));
                    gemm(1.0, MatRef::t(self.value(a)), MatRef::normal(&dy), 1.0, slot);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, a, dy.transpose()),
            Op::Add(a, b) => {
                if self.needs(b) {
                    self.accumulate(grads, b, dy.clone());
                }
                self.accumulate(grads, a, dy);
            }
            Op::Sub(a, b) => {
                if self.needs(b) {
                    self.accumulate(grads, b, dy.map(|x| -x));
                }
                self.accumulate(grads, a, dy);
            }
            Op::Mul(a, b) => {
                if self.needs(a) {
                    let g = dy.zip_map(self.value(b), |d, x| d * x).expect("shape");
                    self.accumulate(grads, a, g);
                }
                if self.needs(b) {
                    let g = dy.zip_map(self.value(a), |d, x| d * x).expect("shape");
                    self.accumulate(grads, b, g);
                }
            }
            Op::AddRow(a, b) => {
                if self.needs(b) {
                    let mut col = vec![0.0; dy.cols()];
                    for r in 0..dy.rows() {
                        for (c, d) in col.iter_mut().zip(dy.row(r)) {
                            *c += d;
                        }
                    }
                    self.accumulate(grads, b, Matrix::row_vector(&col));
                }
                self.accumulate(grads, a, dy);
            }
            Op::Scale(a, c) => self.accumulate(grads, a, dy.map(|d| c * d)),
            Op::LeakyRelu(a, s) => {
                let g = dy
                    .zip_map(self.value(a), |d, x| if x > 0.0 { d } else { s * d })
                    .expect("shape");
                self.accumulate(grads, a, g);
            }
            Op::PRelu(a, slope) => {
                let s = self.scalar(slope);
                let x = self.value(a);
                if self.needs(slope) {
                    let ds: f64 = dy
                        .data()
                        .iter()
                        .zip(x.data())
                        .filter(|(_, &x)| x <= 0.0)
                        .map(|(d, x)| d * x)
                        .sum();
                    self.accumulate(grads, slope, Matrix::scalar(ds));
                }
                if self.needs(a) {
                    let g = dy
                        .zip_map(x, |d, x| if x > 0.0 { d } else { s * d })
                        .expect("shape");
                    self.accumulate(grads, a, g);
                }
            }
            Op::Relu(a) => {
                let g = dy
                    .zip_map(self.value(a), |d, x| if x > 0.0 { d } else { 0.0 })
                    .expect("shape");
                self.accumulate(grads, a, g);
            }
            Op::Sigmoid(a) => {
                let g = dy.zip_map(y, |d, s| d * s * (1.0 - s)).expect("shape");
                self.accumulate(grads, a, g);
            }
            Op::Softplus(a) => {
                let g = dy
                    .zip_map(self.value(a), |d, x| d * sigmoid(x))
                    .expect("shape");
                self.accumulate(grads, a, g);
            }
            Op::RowL1(a) => {
                let x = self.value(a);
                let mut g = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let d = dy.data()[r];
                    for (o, &v) in g.row_mut(r).iter_mut().zip(x.row(r)) {
                        *o = if v > 0.0 {
                            d
                        } else if v < 0.0 {
                            -d
                        } else {
                            0.0
                        };
                    }
                }
                self.accumulate(grads, a, g);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                self.accumulate(grads, a, Matrix::filled(r, c, dy.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let v = dy.data()[0] / (r * c) as f64;
                self.accumulate(grads, a, Matrix::filled(r, c, v));
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(a);
                let mut g = Matrix::zeros(r, c);
                let inv = 1.0 / r as f64;
                for row in 0..r {
                    for (o, d) in g.row_mut(row).iter_mut().zip(dy.data()) {
                        *o = d * inv;
                    }
                }
                self.accumulate(grads, a, g);
            }
            Op::GatherRows(a, ref idx) => {
                let slot = slot(grads, a, self.shape(a));
                for (o, &i) in idx.iter().enumerate() {
                    for (s, d) in slot.row_mut(i).iter_mut().zip(dy.row(o)) {
                        *s += d;
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let slot = slot(grads, a, self.shape(a));
                for r in 0..dy.rows() {
                    for (s, d) in slot.row_mut(start + r).iter_mut().zip(dy.row(r)) {
                        *s += d;
                    }
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.needs(p) {
                        let mut g = Matrix::zeros(r, c);
                        for row in 0..r {
                            g.row_mut(row).copy_from_slice(&dy.row(row)[off..off + c]);
                        }
                        self.accumulate(grads, p, g);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.needs(p) {
                        let g = Matrix::from_vec(r, c, dy.data()[off * c..(off + r) * c].to_vec())
                            .expect("shape");
                        self.accumulate(grads, p, g);
                    }
                    off += r;
                }
            }
            Op::SoftmaxRows(a) => {
                let mut g = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    softmax_backward(y.row(r), dy.row(r), g.row_mut(r));
                }
                self.accumulate(grads, a, g);
            }
            Op::SegmentSoftmax(a, ref offsets) => {
                let mut g = Matrix::zeros(y.rows(), 1);
                for w in offsets.windows(2) {
                    let (s, e) = (w[0], w[1]);
                    softmax_backward(&y.data()[s..e], &dy.data()[s..e], &mut g.data_mut()[s..e]);
                }
                self.accumulate(grads, a, g);
            }
            Op::SegmentWeightedSum {
                values,
                weights,
                ref src,
                ref offsets,
            } => {
                let (vm, wm) = (self.value(values), self.value(weights));
                if self.needs(weights) {
                    let mut g = Matrix::zeros(src.len(), 1);
                    for (seg, w) in offsets.windows(2).enumerate() {
                        let d = dy.row(seg);
                        for p in w[0]..w[1] {
                            g.data_mut()[p] = dot(d, vm.row(src[p]));
                        }
                    }
                    self.accumulate(grads, weights, g);
                }
                if self.needs(values) {
                    let slot = slot(grads, values, vm.shape());
                    for (seg, w) in offsets.windows(2).enumerate() {
                        let d = dy.row(seg);
                        for p in w[0]..w[1] {
                            let a = wm.data()[p];
                            for (s, x) in slot.row_mut(src[p]).iter_mut().zip(d) {
                                *s += a * x;
                            }
                        }
                    }
                }
            }
            Op::SegmentScatter {
                weights,
                ref cols,
                ref offsets,
            } => {
                let mut g = Matrix::zeros(cols.len(), 1);
                for (seg, w) in offsets.windows(2).enumerate() {
                    let d = dy.row(seg);
                    for p in w[0]..w[1] {
                        g.data_mut()[p] = d[cols[p]];
                    }
                }
                self.accumulate(grads, weights, g);
            }
            Op::BceWithLogits(a, ref targets) => {
                let z = self.value(a);
                let scale = dy.data()[0] / targets.len() as f64;
                let g: Vec<f64> = z
                    .data()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&x, &t)| scale * (sigmoid(x) - t))
                    .collect();
                self.accumulate(grads, a, Matrix::col_vector(&g));
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(1.0, &g).expect("gradient shape"),
            empty => *empty = Some(g),
        }
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn check_offsets(offsets: &[usize], len: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&len)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "segment offsets do not partition {len} rows"
        )))
    }
}

fn softmax_backward(y: &[f64], dy: &[f64], out: &mut [f64]) {
    let inner = dot(y, dy);
    for ((o, &s), &d) in out.iter_mut().zip(y).zip(dy) {
        *o = s * (d - inner);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{check_gradients, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]));
        let loss = tape.sum(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(w), Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(Matrix::filled(2, 2, 1.0));
        let unused = tape.param(Matrix::filled(3, 1, 7.0));
        let loss = tape.sum(used);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(unused), Matrix::zeros(3, 1));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::zeros(2, 2));
        assert!(tape.backward(w).is_err());
    }

    #[test]
    fn constants_receive_nothing() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::filled(1, 2, 2.0));
        let w = tape.param(Matrix::filled(2, 1, 1.0));
        let y = tape.matmul(c, w).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.wrt(w), Matrix::filled(2, 1, 2.0));
    }

    #[test]
    fn squared_error_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_matrix(&mut rng, 3, 4);
        let x = random_matrix(&mut rng, 4, 2);
        let y = random_matrix(&mut rng, 3, 2);
        let err = check_gradients(&[w], |tape, p| {
            let xv = tape.constant(x.clone());
            let yv = tape.constant(y.clone());
            let wx = tape.matmul(p[0], xv)?;
            let r = tape.sub(wx, yv)?;
            let sq = tape.mul(r, r)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 4, 3);
        let b = random_matrix(&mut rng, 4, 3);
        let row = random_matrix(&mut rng, 1, 3);
        let slope = Matrix::scalar(0.3);
        let col = random_matrix(&mut rng, 5, 1);
        let err = check_gradients(&[a, b, row, slope, col], |t, p| {
            let (a, b, row, slope, col) = (p[0], p[1], p[2], p[3], p[4]);
            let bt = t.transpose(b);
            let ab = t.matmul(a, bt)?; // 4x4
            let sm = t.softmax_rows(ab)?;
            let s1 = t.sum(sm);
            let m = t.mul(a, b)?;
            let m = t.add_row(m, row)?;
            let lr = t.leaky_relu(m, 0.2);
            let pr = t.prelu(lr, slope)?;
            let sg = t.sigmoid(pr);
            let sp = t.softplus(b);
            let l1 = t.row_l1(sp);
            let rl = t.relu(a);
            let cat = t.concat_cols(&[sg, rl])?;
            let stacked = t.concat_rows(&[cat, cat])?;
            let g = t.gather_rows(stacked, vec![0, 5, 5, 7, 2])?;
            let sl = t.slice_rows(g, 1, 4)?;
            let mr = t.mean_rows(sl)?;
            let s2 = t.sum(mr);
            let s3 = t.sum(l1);
            let offsets: Arc<[usize]> = vec![0, 2, 2, 5].into();
            let ss = t.segment_softmax(col, offsets.clone())?;
            let src: Arc<[usize]> = vec![3, 1, 0, 0, 2].into();
            let ws = t.segment_weighted_sum(a, ss, src.clone(), offsets.clone())?;
            let sc = t.segment_scatter(ss, src, offsets, 4)?;
            let sca = t.matmul(sc, a)?;
            let ws = t.add(ws, sca)?;
            let ws2 = t.mul(ws, ws)?;
            let s4 = t.mean(ws2)?;
            let logits = t.scale(col, 2.0);
            let s5 = t.bce_with_logits(logits, vec![1.0, 0.0, 1.0, 1.0, 0.0])?;
            let x = t.add(s1, s2)?;
            let x = t.add(x, s3)?;
            let x = t.sub(x, s4)?;
            t.add(x, s5)
        })
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn segment_softmax_normalizes_each_segment() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::col_vector(&[1.0, -3.0, 0.5, 2.0, 9.0]));
        let y = tape
            .segment_softmax(x, vec![0, 3, 3, 4, 5].into())
            .unwrap();
        let v = tape.value(y).data();
        assert!((v[0] + v[1] + v[2] - 1.0).abs() < 1e-15);
        assert_eq!(v[3], 1.0);
        assert_eq!(v[4], 1.0);
    }

    #[test]
    fn scatter_times_table_equals_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let table = tape.constant(random_matrix(&mut rng, 4, 3));
        let w = tape.constant(random_matrix(&mut rng, 6, 1));
        let offsets: Arc<[usize]> = vec![0, 3, 3, 6].into();
        let cols: Arc<[usize]> = vec![2, 2, 0, 1, 3, 0].into();
        let direct = tape.segment_weighted_sum(table, w, cols.clone(), offsets.clone()).unwrap();
        let sc = tape.segment_scatter(w, cols, offsets, 4).unwrap();
        let via = tape.matmul(sc, table).unwrap();
        for (a, b) in tape.value(direct).data().iter().zip(tape.value(via).data()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(tape.segment_scatter(w, vec![0, 0, 0, 0, 0, 4].into(), vec![0, 6].into(), 4).is_err());
    }

    #[test]
    fn stable_activations() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }
}
