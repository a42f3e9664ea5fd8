//! Reverse-mode differentiation over dense `rank ≤ 2` arrays.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar walks the record once in reverse and
//! returns the gradient of that scalar with respect to every parameter
//! leaf. Graph-structured computations are expressed with explicit row
//! index lists (`gather_rows`, `scatter_add_rows`, `segment_softmax`)
//! rather than sparse tensors.
//!
//! Every primitive checks its result for NaN/Inf and fails with
//! [`Error::NonFinite`] instead of letting bad values propagate.

mod array;
mod gradcheck;

use std::sync::Arc;

pub use array::Array;
pub use gradcheck::{grad_check, GradCheckReport};

use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    RowMean(Var),
    Sum(Var),
    SoftmaxRows(Var),
    SegmentSoftmax(Var, Arc<[usize]>),
    Elu(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var, f64),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    EuclideanDist(Var, Var),
    Dropout(Var, Arc<Array>),
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications.
///
/// Nodes are appended in evaluation order, so the record is always a
/// topological order of the computation.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
    spent: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of [`Tape::backward`]: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape if the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Array {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Array::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// How the right operand of an elementwise op is stretched to the left operand's shape.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    None,
    Row,
    Col,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::None)
    } else if b == (1, 1) {
        Ok(Broadcast::Scalar)
    } else if b.0 == 1 && b.1 == a.1 {
        Ok(Broadcast::Row)
    } else if b.1 == 1 && b.0 == a.0 {
        Ok(Broadcast::Col)
    } else {
        Err(shape_err(
            op,
            format!("cannot broadcast {}x{} onto {}x{}", b.0, b.1, a.0, a.1),
        ))
    }
}

#[inline]
fn broadcast_index(kind: Broadcast, cols: usize, r: usize, c: usize) -> usize {
    match kind {
        Broadcast::None => r * cols + c,
        Broadcast::Row => c,
        Broadcast::Col => r,
        Broadcast::Scalar => 0,
    }
}

/// Sums a full-shape gradient down to the broadcast operand's shape.
fn reduce_broadcast(kind: Broadcast, grad: &Array, target: (usize, usize)) -> Array {
    if let Broadcast::None = kind {
        return grad.clone();
    }
    let mut out = Array::zeros(target.0, target.1);
    let cols = grad.cols();
    for r in 0..grad.rows() {
        for c in 0..cols {
            let idx = broadcast_index(kind, cols, r, c);
            out.data_mut()[idx] += grad.get(r, c);
        }
    }
    out
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

impl Tape {
    /// A recording tape: parameters require gradients.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
            spent: false,
        }
    }

    /// A tape that never records gradients. [`Tape::backward`] on it is an error,
    /// which is how evaluation code guarantees it cannot update anything.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
            spent: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears the record so the tape can be reused after a backward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.spent = false;
    }

    pub fn value(&self, var: Var) -> &Array {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Differentiable leaf (a learnable parameter).
    pub fn param(&mut self, value: Array) -> Result<Var> {
        let rg = self.grad_enabled;
        self.push_leaf(value, rg)
    }

    /// Non-differentiable leaf (inputs, masks, targets).
    pub fn constant(&mut self, value: Array) -> Result<Var> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Array, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.push_node(value, Op::Leaf, requires_grad)
    }

    fn push_node(&mut self, value: Array, op: Op, requires_grad: bool) -> Result<Var> {
        if self.spent {
            return Err(Error::Contract(
                "tape already consumed by backward; call reset() first".into(),
            ));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn record(&mut self, name: &'static str, value: Array, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let rg = self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let op = if rg { op } else { Op::Leaf };
        self.push_node(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.record("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.record("transpose", out, Op::Transpose(a), &[a])
    }

    /// `a + b`; `b` may be a row vector, column vector or scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("add", a, b, |x, y| x + y)?;
        self.record("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.elementwise("mul", a, b, |x, y| x * y)?;
        self.record("mul", out, Op::Mul(a, b), &[a, b])
    }

    fn elementwise(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let av = self.value(a);
        let bv = self.value(b);
        let kind = broadcast_kind(op, av.shape(), bv.shape())?;
        let (rows, cols) = av.shape();
        let mut out = Array::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let y = bv.data()[broadcast_index(kind, cols, r, c)];
                out.set(r, c, f(av.get(r, c), y));
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * factor);
        self.record("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| -v);
        self.record("neg", out, Op::Neg(a), &[a])
    }

    /// Stacks arrays vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_rows", "no inputs".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            if v.cols() != cols {
                return Err(shape_err(
                    "concat_rows",
                    format!("column counts {} and {}", cols, v.cols()),
                ));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Array::from_vec(rows, cols, data)?;
        self.record("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Joins arrays side by side; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_cols", "no inputs".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    format!("row counts {} and {}", rows, v.rows()),
                ));
            }
            cols += v.cols();
        }
        let mut out = Array::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let v = self.value(*p);
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
                offset += v.cols();
            }
        }
        self.record("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Mean over rows: `n × d → 1 × d`.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let (rows, cols) = v.shape();
        if rows == 0 {
            return Err(shape_err("row_mean", "no rows".into()));
        }
        let mut out = Array::zeros(1, cols);
        for r in 0..rows {
            for (o, x) in out.data_mut().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        out.scale_in_place(1.0 / rows as f64);
        self.record("row_mean", out, Op::RowMean(a), &[a])
    }

    /// Sum of all entries, as a `1 × 1` array.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Array::scalar(self.value(a).sum());
        self.record("sum", out, Op::Sum(a), &[a])
    }

    /// Softmax along each row, computed with max-subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        if out.cols() == 0 {
            return Err(shape_err("softmax_rows", "zero-width rows".into()));
        }
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.record("softmax_rows", out, Op::SoftmaxRows(a), &[a])
    }

    /// Softmax of a column vector within groups: entry `e` is normalized against
    /// every entry sharing `segments[e]`.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<[usize]>) -> Result<Var> {
        let v = self.value(a);
        if v.cols() != 1 || v.rows() != segments.len() {
            return Err(shape_err(
                "segment_softmax",
                format!(
                    "input {}x{} with {} segment ids",
                    v.rows(),
                    v.cols(),
                    segments.len()
                ),
            ));
        }
        let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (e, &s) in segments.iter().enumerate() {
            max[s] = max[s].max(v.data()[e]);
        }
        let mut exp: Vec<f64> = segments
            .iter()
            .enumerate()
            .map(|(e, &s)| (v.data()[e] - max[s]).exp())
            .collect();
        let mut total = vec![0.0; n_seg];
        for (e, &s) in segments.iter().enumerate() {
            total[s] += exp[e];
        }
        for (e, &s) in segments.iter().enumerate() {
            exp[e] /= total[s];
        }
        let out = Array::column_vector(exp);
        self.record("segment_softmax", out, Op::SegmentSoftmax(a, segments), &[a])
    }

    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(elu);
        self.record("elu", out, Op::Elu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.record("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        self.record("relu", out, Op::Relu(a), &[a])
    }

    /// Natural log with inputs clamped from below at `floor`; clamped entries get zero gradient.
    pub fn log(&mut self, a: Var, floor: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(floor).ln());
        self.record("log", out, Op::Log(a, floor), &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        if start > end || end > v.rows() {
            return Err(shape_err(
                "slice_rows",
                format!("range {start}..{end} of {} rows", v.rows()),
            ));
        }
        let cols = v.cols();
        let out = Array::from_vec(end - start, cols, v.data()[start * cols..end * cols].to_vec())?;
        self.record("slice_rows", out, Op::SliceRows(a, start), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(a);
        if start > end || end > v.cols() {
            return Err(shape_err(
                "slice_cols",
                format!("range {start}..{end} of {} cols", v.cols()),
            ));
        }
        let mut out = Array::zeros(v.rows(), end - start);
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..end]);
        }
        self.record("slice_cols", out, Op::SliceCols(a, start), &[a])
    }

    /// Output row `e` is input row `index[e]`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let v = self.value(a);
        let cols = v.cols();
        let mut out = Array::zeros(index.len(), cols);
        for (e, &i) in index.iter().enumerate() {
            if i >= v.rows() {
                return Err(shape_err(
                    "gather_rows",
                    format!("row {i} of {} rows", v.rows()),
                ));
            }
            out.row_mut(e).copy_from_slice(v.row(i));
        }
        self.record("gather_rows", out, Op::GatherRows(a, index), &[a])
    }

    /// Output row `i` is the sum of input rows `e` with `index[e] == i`, over `rows` output rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, rows: usize) -> Result<Var> {
        let v = self.value(a);
        if v.rows() != index.len() {
            return Err(shape_err(
                "scatter_add_rows",
                format!("{} rows with {} indices", v.rows(), index.len()),
            ));
        }
        let cols = v.cols();
        let mut out = Array::zeros(rows, cols);
        for (e, &i) in index.iter().enumerate() {
            if i >= rows {
                return Err(shape_err("scatter_add_rows", format!("row {i} of {rows}")));
            }
            for (o, x) in out.row_mut(i).iter_mut().zip(v.row(e)) {
                *o += x;
            }
        }
        self.record("scatter_add_rows", out, Op::ScatterAddRows(a, index), &[a])
    }

    /// Euclidean distance between two equal-shape arrays, as a `1 × 1` array.
    pub fn euclidean_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(
                "euclidean_dist",
                format!(
                    "{}x{} vs {}x{}",
                    av.rows(),
                    av.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let d = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        self.record("euclidean_dist", Array::scalar(d), Op::EuclideanDist(a, b), &[a, b])
    }

    /// Multiplies by a precomputed dropout mask (entries already scaled by `1/(1-p)`).
    pub fn dropout(&mut self, a: Var, mask: Arc<Array>) -> Result<Var> {
        let v = self.value(a);
        if v.shape() != mask.shape() {
            return Err(shape_err(
                "dropout_mask_apply",
                format!(
                    "input {}x{} with mask {}x{}",
                    v.rows(),
                    v.cols(),
                    mask.rows(),
                    mask.cols()
                ),
            ));
        }
        let mut out = v.clone();
        for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        self.record("dropout_mask_apply", out, Op::Dropout(a, mask), &[a])
    }

    /// Reverse pass from a scalar loss. Visits each record once; the tape must be
    /// [`reset`](Tape::reset) before it records again.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if !self.grad_enabled {
            return Err(Error::Contract(
                "backward called on an inference tape".into(),
            ));
        }
        if self.spent {
            return Err(Error::Contract("tape already consumed by backward".into()));
        }
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {r}x{c}"
            )));
        }
        self.spent = true;
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Array>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(idx, &g, &mut grads)?;
            }
            grads[idx] = Some(g);
        }

        // only leaves that asked for gradients keep them
        for (idx, node) in self.nodes.iter().enumerate() {
            if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Array, grads: &mut [Option<Array>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |var: Var, contrib: Array| {
            if !self.nodes[var.0].requires_grad {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    acc(*a, g.matmul(&bv.transpose())?);
                }
                if self.requires_grad(*b) {
                    acc(*b, av.transpose().matmul(g)?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                if self.requires_grad(*b) {
                    let bs = self.shape(*b);
                    let kind = broadcast_kind("add", out.shape(), bs)?;
                    acc(*b, reduce_broadcast(kind, g, bs));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let kind = broadcast_kind("mul", av.shape(), bv.shape())?;
                let cols = av.cols();
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows() {
                        for c in 0..cols {
                            let y = bv.data()[broadcast_index(kind, cols, r, c)];
                            ga.set(r, c, ga.get(r, c) * y);
                        }
                    }
                    acc(*a, ga);
                }
                if self.requires_grad(*b) {
                    let mut full = g.clone();
                    for (f, x) in full.data_mut().iter_mut().zip(av.data()) {
                        *f *= x;
                    }
                    acc(*b, reduce_broadcast(kind, &full, bv.shape()));
                }
            }
            Op::Scale(a, factor) => acc(*a, g.map(|v| v * factor)),
            Op::Neg(a) => acc(*a, g.map(|v| -v)),
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let rows = self.shape(*p).0;
                    let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    acc(*p, Array::from_vec(rows, cols, slice)?);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = self.shape(*p);
                    let mut part = Array::zeros(rows, cols);
                    for r in 0..rows {
                        part.row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    acc(*p, part);
                    offset += cols;
                }
            }
            Op::RowMean(a) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Array::zeros(rows, cols);
                let inv = 1.0 / rows as f64;
                for r in 0..rows {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = x * inv;
                    }
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                acc(*a, Array::filled(rows, cols, g.item()));
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Array::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                    for (c, o) in ga.row_mut(r).iter_mut().enumerate() {
                        *o = y[c] * (gy[c] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::SegmentSoftmax(a, segments) => {
                let n_seg = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for (e, &s) in segments.iter().enumerate() {
                    dot[s] += out.data()[e] * g.data()[e];
                }
                let ga: Vec<f64> = segments
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| out.data()[e] * (g.data()[e] - dot[s]))
                    .collect();
                acc(*a, Array::column_vector(ga));
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for ((o, &xv), &yv) in ga.data_mut().iter_mut().zip(x.data()).zip(out.data()) {
                    if xv <= 0.0 {
                        *o *= yv + 1.0;
                    }
                }
                acc(*a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (o, &s) in ga.data_mut().iter_mut().zip(out.data()) {
                    *o *= s * (1.0 - s);
                }
                acc(*a, ga);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (o, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *o = 0.0;
                    }
                }
                acc(*a, ga);
            }
            Op::Log(a, floor) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (o, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                    *o = if xv > *floor { *o / xv } else { 0.0 };
                }
                acc(*a, ga);
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Array::zeros(rows, cols);
                ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Array::zeros(rows, cols);
                for r in 0..rows {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::GatherRows(a, index) => {
                let (rows, cols) = self.shape(*a);
                let mut ga = Array::zeros(rows, cols);
                for (e, &i) in index.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(e)) {
                        *o += x;
                    }
                }
                acc(*a, ga);
            }
            Op::ScatterAddRows(a, index) => {
                let cols = g.cols();
                let mut ga = Array::zeros(index.len(), cols);
                for (e, &i) in index.iter().enumerate() {
                    ga.row_mut(e).copy_from_slice(g.row(i));
                }
                acc(*a, ga);
            }
            Op::EuclideanDist(a, b) => {
                let d = out.item();
                let (av, bv) = (self.value(*a), self.value(*b));
                // subgradient 0 at coincident points
                let coef = if d > 0.0 { g.item() / d } else { 0.0 };
                let mut diff = av.clone();
                for (o, y) in diff.data_mut().iter_mut().zip(bv.data()) {
                    *o = (*o - y) * coef;
                }
                if self.requires_grad(*b) {
                    acc(*b, diff.map(|v| -v));
                }
                acc(*a, diff);
            }
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (o, m) in ga.data_mut().iter_mut().zip(mask.data()) {
                    *o *= m;
                }
                acc(*a, ga);
            }
        }
        Ok(())
    }
}
