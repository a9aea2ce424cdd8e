//! Minimal reverse-mode differentiation over dense row-major 2-D tensors
//! (rows are points or pixels, columns are feature channels).
//!
//! Graphs are built eagerly: each operator computes its output at
//! construction time and records its parents, so a [`Value`] is both a node
//! handle and the result. [`Value::backward`] runs reverse-topological
//! adjoint accumulation into every reachable gradient slot.
//!
//! A graph instance is single-writer; distinct graphs may be evaluated on
//! distinct threads.

mod checkpoint;
mod fd;
mod mlp;
mod sgd;

pub use checkpoint::{load_params, save_params, CheckpointError, MAGIC};
pub use fd::finite_difference_check;
pub use mlp::{Activation, Linear, Mlp};
pub use sgd::Sgd;

use ndarray::{Array2, Axis};
use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Dense row-major table of 64-bit floats.
pub type Matrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch, {lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("{op}: row index {index} out of range for {rows} rows")]
    IndexOutOfRange { op: &'static str, index: usize, rows: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("scatter_mean: group {group} has no members")]
    EmptyGroup { group: usize },
    #[error("{op}: needs at least one input")]
    EmptyInput { op: &'static str },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("backward already ran on this loss; rebuild the graph before differentiating again")]
    BackwardTwice,
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGrad { name: String },
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
}

/// Operator tag for each graph node.
#[derive(Debug, Clone)]
pub enum OpKind {
    Leaf,
    MatMul,
    AddBias,
    Relu { leak: f64 },
    Sigmoid,
    ConcatCols { widths: Vec<usize> },
    ConcatRowsPassthrough { heights: Vec<usize> },
    ElementwiseAdd,
    ElementwiseMul,
    RowMean,
    BroadcastRow,
    GatherRows { indices: Vec<usize> },
    ScatterMean { groups: Vec<usize>, counts: Vec<usize> },
    SoftmaxCrossEntropy { labels: Vec<usize> },
    RowwiseL2Mean,
}

struct Node {
    id: u64,
    data: RefCell<Matrix>,
    grad: RefCell<Matrix>,
    op: OpKind,
    parents: Vec<Value>,
    requires_grad: bool,
    backward_done: Cell<bool>,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Node in the differentiable computation graph: data table, gradient
/// accumulator, operator tag, and parent references. Cloning is cheap (a
/// reference-count bump).
#[derive(Clone)]
pub struct Value {
    inner: Rc<Node>,
}

impl std::fmt::Debug for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        f.debug_struct("Value")
            .field("id", &self.inner.id)
            .field("shape", &(r, c))
            .field("op", &self.inner.op)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn new_node(data: Matrix, op: OpKind, parents: Vec<Value>, requires_grad: bool) -> Value {
    let grad = Matrix::zeros(data.raw_dim());
    Value {
        inner: Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            data: RefCell::new(data),
            grad: RefCell::new(grad),
            op,
            parents,
            requires_grad,
            backward_done: Cell::new(false),
        }),
    }
}

impl Value {
    /// A constant leaf: no gradient is ever accumulated into it.
    pub fn constant(data: Matrix) -> Self {
        new_node(data, OpKind::Leaf, vec![], false)
    }

    /// A trainable leaf: gradients accumulate into `grad` during backward.
    pub fn param(data: Matrix) -> Self {
        new_node(data, OpKind::Leaf, vec![], true)
    }

    pub fn shape(&self) -> (usize, usize) {
        let d = self.inner.data.borrow();
        (d.nrows(), d.ncols())
    }

    pub fn data(&self) -> Ref<'_, Matrix> {
        self.inner.data.borrow()
    }

    pub fn grad(&self) -> Ref<'_, Matrix> {
        self.inner.grad.borrow()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// The single entry of a 1x1 value.
    pub fn scalar(&self) -> f64 {
        let d = self.inner.data.borrow();
        debug_assert_eq!(d.dim(), (1, 1));
        d[(0, 0)]
    }

    /// Replaces the stored table. Only meaningful for leaves: interior node
    /// data is owned by the op that produced it.
    pub fn set_data(&self, data: Matrix) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.raw_dim(), data.raw_dim(), "set_data must preserve shape");
        *d = data;
    }

    pub fn zero_grad(&self) {
        self.inner.grad.borrow_mut().fill(0.0);
    }

    fn add_grad(&self, delta: &Matrix) {
        let mut g = self.inner.grad.borrow_mut();
        *g += delta;
    }

    fn same_graph_id(&self) -> u64 {
        self.inner.id
    }

    // ---- operators -------------------------------------------------------

    fn unary(&self, op: OpKind, data: Matrix) -> Value {
        let rg = self.inner.requires_grad;
        new_node(data, op, vec![self.clone()], rg)
    }

    fn binary(&self, other: &Value, op: OpKind, data: Matrix) -> Value {
        let rg = self.inner.requires_grad || other.inner.requires_grad;
        new_node(data, op, vec![self.clone(), other.clone()], rg)
    }

    pub fn matmul(&self, rhs: &Value) -> Result<Value, AdError> {
        let a = self.data();
        let b = rhs.data();
        if a.ncols() != b.nrows() {
            return Err(shape_err("matmul", &a, &b));
        }
        let out = a.dot(&*b);
        drop(a);
        drop(b);
        Ok(self.binary(rhs, OpKind::MatMul, out))
    }

    /// Adds a 1xD bias row to every row of an NxD table.
    pub fn add_bias(&self, bias: &Value) -> Result<Value, AdError> {
        let x = self.data();
        let b = bias.data();
        if b.nrows() != 1 || b.ncols() != x.ncols() {
            return Err(shape_err("add_bias", &x, &b));
        }
        let out = &*x + &b.row(0);
        drop(x);
        drop(b);
        Ok(self.binary(bias, OpKind::AddBias, out))
    }

    pub fn relu(&self) -> Value {
        self.relu_leaky(0.0)
    }

    pub fn relu_leaky(&self, leak: f64) -> Value {
        let out = self.data().mapv(|v| if v > 0.0 { v } else { leak * v });
        self.unary(OpKind::Relu { leak }, out)
    }

    pub fn sigmoid(&self) -> Value {
        let out = self.data().mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.unary(OpKind::Sigmoid, out)
    }

    pub fn concat_cols(parts: &[Value]) -> Result<Value, AdError> {
        if parts.is_empty() {
            return Err(AdError::EmptyInput { op: "concat_cols" });
        }
        let rows = parts[0].shape().0;
        for p in parts {
            if p.shape().0 != rows {
                let a = parts[0].data();
                let b = p.data();
                return Err(shape_err("concat_cols", &a, &b));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.shape().1).collect();
        let borrowed: Vec<Ref<'_, Matrix>> = parts.iter().map(|p| p.data()).collect();
        let views: Vec<_> = borrowed.iter().map(|m| m.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("shape-checked concat");
        drop(views);
        drop(borrowed);
        let rg = parts.iter().any(|p| p.requires_grad());
        Ok(new_node(out, OpKind::ConcatCols { widths }, parts.to_vec(), rg))
    }

    /// Stacks tables vertically; gradients pass through to each block
    /// unchanged.
    pub fn concat_rows_passthrough(parts: &[Value]) -> Result<Value, AdError> {
        if parts.is_empty() {
            return Err(AdError::EmptyInput { op: "concat_rows_passthrough" });
        }
        let cols = parts[0].shape().1;
        for p in parts {
            if p.shape().1 != cols {
                let a = parts[0].data();
                let b = p.data();
                return Err(shape_err("concat_rows_passthrough", &a, &b));
            }
        }
        let heights: Vec<usize> = parts.iter().map(|p| p.shape().0).collect();
        let borrowed: Vec<Ref<'_, Matrix>> = parts.iter().map(|p| p.data()).collect();
        let views: Vec<_> = borrowed.iter().map(|m| m.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("shape-checked concat");
        drop(views);
        drop(borrowed);
        let rg = parts.iter().any(|p| p.requires_grad());
        Ok(new_node(out, OpKind::ConcatRowsPassthrough { heights }, parts.to_vec(), rg))
    }

    pub fn add(&self, rhs: &Value) -> Result<Value, AdError> {
        let a = self.data();
        let b = rhs.data();
        if a.raw_dim() != b.raw_dim() {
            return Err(shape_err("elementwise_add", &a, &b));
        }
        let out = &*a + &*b;
        drop(a);
        drop(b);
        Ok(self.binary(rhs, OpKind::ElementwiseAdd, out))
    }

    pub fn mul(&self, rhs: &Value) -> Result<Value, AdError> {
        let a = self.data();
        let b = rhs.data();
        if a.raw_dim() != b.raw_dim() {
            return Err(shape_err("elementwise_mul", &a, &b));
        }
        let out = &*a * &*b;
        drop(a);
        drop(b);
        Ok(self.binary(rhs, OpKind::ElementwiseMul, out))
    }

    /// Global average pooling over the row (point) axis: NxD -> 1xD.
    pub fn row_mean(&self) -> Value {
        let x = self.data();
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
        drop(x);
        self.unary(OpKind::RowMean, mean)
    }

    /// Replicates a 1xD row to N rows.
    pub fn broadcast_row(&self, rows: usize) -> Result<Value, AdError> {
        let x = self.data();
        if x.nrows() != 1 || rows == 0 {
            return Err(AdError::ShapeMismatch {
                op: "broadcast_row",
                lhs_rows: x.nrows(),
                lhs_cols: x.ncols(),
                rhs_rows: rows,
                rhs_cols: x.ncols(),
            });
        }
        let out = x
            .broadcast((rows, x.ncols()))
            .expect("1xD broadcasts to NxD")
            .to_owned();
        drop(x);
        Ok(self.unary(OpKind::BroadcastRow, out))
    }

    /// Selects rows by index, in the given order. Differentiable: the adjoint
    /// scatter-adds gradients back to the selected rows.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Value, AdError> {
        let x = self.data();
        let n = x.nrows();
        for &i in indices {
            if i >= n {
                return Err(AdError::IndexOutOfRange { op: "gather_rows", index: i, rows: n });
            }
        }
        let out = x.select(Axis(0), indices);
        drop(x);
        Ok(self.unary(OpKind::GatherRows { indices: indices.to_vec() }, out))
    }

    /// Pools rows into `n_groups` buckets by mean. `groups[i]` is the bucket
    /// of row `i`; every bucket must be non-empty. Rows are accumulated in
    /// row order, so the result is deterministic for a fixed row order.
    pub fn scatter_mean(&self, groups: &[usize], n_groups: usize) -> Result<Value, AdError> {
        let x = self.data();
        let n = x.nrows();
        if groups.len() != n {
            return Err(AdError::ShapeMismatch {
                op: "scatter_mean",
                lhs_rows: n,
                lhs_cols: x.ncols(),
                rhs_rows: groups.len(),
                rhs_cols: 1,
            });
        }
        let mut counts = vec![0usize; n_groups];
        for &g in groups {
            if g >= n_groups {
                return Err(AdError::IndexOutOfRange {
                    op: "scatter_mean",
                    index: g,
                    rows: n_groups,
                });
            }
            counts[g] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(AdError::EmptyGroup { group: empty });
        }
        let mut out = Matrix::zeros((n_groups, x.ncols()));
        for (i, row) in x.outer_iter().enumerate() {
            let mut dst = out.row_mut(groups[i]);
            dst += &row;
        }
        for (g, mut row) in out.outer_iter_mut().enumerate() {
            row /= counts[g] as f64;
        }
        drop(x);
        Ok(self.unary(OpKind::ScatterMean { groups: groups.to_vec(), counts }, out))
    }

    /// Mean softmax cross-entropy over rows: NxC logits and N labels -> 1x1.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Value, AdError> {
        let x = self.data();
        let (n, c) = x.dim();
        if labels.len() != n {
            return Err(AdError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs_rows: n,
                lhs_cols: c,
                rhs_rows: labels.len(),
                rhs_cols: 1,
            });
        }
        for &y in labels {
            if y >= c {
                return Err(AdError::LabelOutOfRange { label: y, classes: c });
            }
        }
        let mut total = 0.0;
        for (i, row) in x.outer_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let out = Matrix::from_elem((1, 1), total / n as f64);
        drop(x);
        Ok(self.unary(OpKind::SoftmaxCrossEntropy { labels: labels.to_vec() }, out))
    }

    /// Mean per-row Euclidean norm: NxD -> 1x1, (1/N) * sum_i ||row_i||_2.
    /// At a zero row the subgradient 0 is used.
    pub fn rowwise_l2_mean(&self) -> Value {
        let x = self.data();
        let n = x.nrows() as f64;
        let total: f64 = x
            .outer_iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        let out = Matrix::from_elem((1, 1), total / n);
        drop(x);
        self.unary(OpKind::RowwiseL2Mean, out)
    }

    // ---- evaluation ------------------------------------------------------

    /// The forward value of this node. Graphs evaluate eagerly at
    /// construction; this re-reads the stored table.
    pub fn forward(&self) -> Matrix {
        self.data().clone()
    }

    /// Reverse-topological adjoint accumulation from a 1x1 loss into every
    /// reachable gradient slot. All reachable gradients are zeroed first, so
    /// each backward pass starts from a clean accumulator. Calling twice on
    /// the same loss node is an error.
    pub fn backward(&self) -> Result<(), AdError> {
        {
            let d = self.data();
            if d.dim() != (1, 1) {
                return Err(AdError::NonScalarLoss { rows: d.nrows(), cols: d.ncols() });
            }
        }
        if self.inner.backward_done.get() {
            return Err(AdError::BackwardTwice);
        }
        self.inner.backward_done.set(true);

        let order = self.topo_order();
        for v in &order {
            v.zero_grad();
        }
        self.inner.grad.borrow_mut()[(0, 0)] = 1.0;
        for v in order.iter().rev() {
            v.backprop_node();
        }
        Ok(())
    }

    /// Topological order (parents before children) over the subgraph that
    /// requires gradients, using an explicit stack. Ties are resolved by
    /// construction order, which keeps accumulation order deterministic.
    fn topo_order(&self) -> Vec<Value> {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        // (node, parents_pushed)
        let mut stack: Vec<(Value, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !visited.insert(v.same_graph_id()) {
                continue;
            }
            stack.push((v.clone(), true));
            for p in &v.inner.parents {
                if p.inner.requires_grad && !visited.contains(&p.same_graph_id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }

    fn backprop_node(&self) {
        let parents = &self.inner.parents;
        if parents.is_empty() {
            return;
        }
        let g = self.inner.grad.borrow();
        match &self.inner.op {
            OpKind::Leaf => {}
            OpKind::MatMul => {
                let a = &parents[0];
                let b = &parents[1];
                if a.requires_grad() {
                    let delta = g.dot(&b.data().t());
                    a.add_grad(&delta);
                }
                if b.requires_grad() {
                    let delta = a.data().t().dot(&*g);
                    b.add_grad(&delta);
                }
            }
            OpKind::AddBias => {
                let x = &parents[0];
                let bias = &parents[1];
                if x.requires_grad() {
                    x.add_grad(&g);
                }
                if bias.requires_grad() {
                    let delta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    bias.add_grad(&delta);
                }
            }
            OpKind::Relu { leak } => {
                let x = &parents[0];
                if x.requires_grad() {
                    let xd = x.data();
                    let mut delta = g.clone();
                    ndarray::Zip::from(&mut delta).and(&*xd).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d *= leak;
                        }
                    });
                    drop(xd);
                    x.add_grad(&delta);
                }
            }
            OpKind::Sigmoid => {
                let x = &parents[0];
                if x.requires_grad() {
                    let s = self.inner.data.borrow();
                    let delta = &*g * &s.mapv(|v| v * (1.0 - v));
                    drop(s);
                    x.add_grad(&delta);
                }
            }
            OpKind::ConcatCols { widths } => {
                let mut offset = 0;
                for (p, &w) in parents.iter().zip(widths) {
                    if p.requires_grad() {
                        let delta = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                        p.add_grad(&delta);
                    }
                    offset += w;
                }
            }
            OpKind::ConcatRowsPassthrough { heights } => {
                let mut offset = 0;
                for (p, &h) in parents.iter().zip(heights) {
                    if p.requires_grad() {
                        let delta = g.slice(ndarray::s![offset..offset + h, ..]).to_owned();
                        p.add_grad(&delta);
                    }
                    offset += h;
                }
            }
            OpKind::ElementwiseAdd => {
                for p in parents {
                    if p.requires_grad() {
                        p.add_grad(&g);
                    }
                }
            }
            OpKind::ElementwiseMul => {
                let a = &parents[0];
                let b = &parents[1];
                if a.requires_grad() {
                    let delta = &*g * &*b.data();
                    a.add_grad(&delta);
                }
                if b.requires_grad() {
                    let delta = &*g * &*a.data();
                    b.add_grad(&delta);
                }
            }
            OpKind::RowMean => {
                let x = &parents[0];
                if x.requires_grad() {
                    let n = x.shape().0;
                    let row = &g.row(0) / n as f64;
                    let delta = row
                        .insert_axis(Axis(0))
                        .broadcast((n, g.ncols()))
                        .expect("row broadcast")
                        .to_owned();
                    x.add_grad(&delta);
                }
            }
            OpKind::BroadcastRow => {
                let x = &parents[0];
                if x.requires_grad() {
                    let delta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    x.add_grad(&delta);
                }
            }
            OpKind::GatherRows { indices } => {
                let x = &parents[0];
                if x.requires_grad() {
                    let (n, c) = x.shape();
                    let mut delta = Matrix::zeros((n, c));
                    for (j, &i) in indices.iter().enumerate() {
                        let mut dst = delta.row_mut(i);
                        dst += &g.row(j);
                    }
                    x.add_grad(&delta);
                }
            }
            OpKind::ScatterMean { groups, counts } => {
                let x = &parents[0];
                if x.requires_grad() {
                    let (n, c) = x.shape();
                    let mut delta = Matrix::zeros((n, c));
                    for i in 0..n {
                        let gidx = groups[i];
                        let scale = 1.0 / counts[gidx] as f64;
                        let mut dst = delta.row_mut(i);
                        dst.assign(&g.row(gidx));
                        dst *= scale;
                    }
                    x.add_grad(&delta);
                }
            }
            OpKind::SoftmaxCrossEntropy { labels } => {
                let x = &parents[0];
                if x.requires_grad() {
                    let xd = x.data();
                    let (n, _c) = xd.dim();
                    let upstream = g[(0, 0)];
                    let mut delta = Matrix::zeros(xd.raw_dim());
                    for (i, row) in xd.outer_iter().enumerate() {
                        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                        for (j, &v) in row.iter().enumerate() {
                            let p = (v - m).exp() / z;
                            let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                            delta[(i, j)] = upstream * (p - onehot) / n as f64;
                        }
                    }
                    drop(xd);
                    x.add_grad(&delta);
                }
            }
            OpKind::RowwiseL2Mean => {
                let x = &parents[0];
                if x.requires_grad() {
                    let xd = x.data();
                    let (n, _c) = xd.dim();
                    let upstream = g[(0, 0)];
                    let mut delta = Matrix::zeros(xd.raw_dim());
                    for (i, row) in xd.outer_iter().enumerate() {
                        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            let scale = upstream / (n as f64 * norm);
                            for (j, &v) in row.iter().enumerate() {
                                delta[(i, j)] = scale * v;
                            }
                        }
                    }
                    drop(xd);
                    x.add_grad(&delta);
                }
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> AdError {
    AdError::ShapeMismatch {
        op,
        lhs_rows: a.nrows(),
        lhs_cols: a.ncols(),
        rhs_rows: b.nrows(),
        rhs_cols: b.ncols(),
    }
}
