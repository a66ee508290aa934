//! Reverse-mode autodiff over a flat tape of matrix ops.
//!
//! A [`Graph`] owns every tensor created during one forward pass. Nodes are
//! appended in construction order, which is already a topological order, so
//! backward is a single reverse sweep. All graph tensors are rank-2 and
//! row-major; row vectors are `1 x n`, scalars are `1 x 1`.
//!
//! Every forward op validates shapes and rejects non-finite outputs. A node
//! is *tracked* when it is a parameter or depends on one; only tracked nodes
//! get gradient buffers.

use super::tensor::{matmul_raw, Tensor};
use crate::error::{CoreError, Result};

/// Handle to a node inside one [`Graph`]. Never valid across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Which axis a recorded normalization op acted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormAxis {
    Row,
    Col,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddRowVec(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulRowVec(NodeId, NodeId),
    MulColVec(NodeId, NodeId),
    ScalarMix { beta: NodeId, a: NodeId, b: NodeId },
    Scale(NodeId, f64),
    RowSoftmax(NodeId),
    ColSoftmax(NodeId),
    RowNormalize(NodeId),
    RowStandardize { x: NodeId, eps: f64 },
    Gelu(NodeId),
    Sigmoid(NodeId),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    SliceRows { x: NodeId, start: usize, len: usize },
    SliceCols { x: NodeId, start: usize, len: usize },
    Sum(NodeId),
    Mean(NodeId),
    Bce { yhat: NodeId, labels: Vec<f64>, clamp: f64 },
    IndexMap { x: NodeId, map: Vec<Option<usize>> },
}

struct Node {
    tensor: Tensor,
    tracked: bool,
}

/// Tape of op records plus the tensors they produced.
pub struct Graph {
    nodes: Vec<Node>,
    ops: Vec<Op>,
    norm_records: Vec<(NodeId, NormAxis)>,
    consumed: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            ops: Vec::new(),
            norm_records: Vec::new(),
            consumed: false,
        }
    }

    /// Insert a constant leaf (no gradient).
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf, false)
    }

    /// Insert a trainable leaf.
    pub fn param(&mut self, mut t: Tensor) -> NodeId {
        t.requires_grad = true;
        self.push(t, Op::Leaf, true)
    }

    pub fn input_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId> {
        Ok(self.input(Tensor::new(shape, data)?))
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].tensor.data()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].tensor.shape()
    }

    pub fn tensor(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    /// Gradient of a leaf after [`Graph::backward`] ran.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Outputs of every softmax/normalize op recorded during forward, for
    /// invariant checks (rows or columns must sum to 1).
    pub fn norm_records(&self) -> &[(NodeId, NormAxis)] {
        &self.norm_records
    }

    fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].tensor.rows()
    }

    fn cols(&self, id: NodeId) -> usize {
        self.nodes[id.0].tensor.cols()
    }

    fn tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn push(&mut self, tensor: Tensor, op: Op, tracked: bool) -> NodeId {
        self.nodes.push(Node { tensor, tracked });
        self.ops.push(op);
        NodeId(self.nodes.len() - 1)
    }

    fn emit(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Result<NodeId> {
        if self.consumed {
            return Err(CoreError::Autodiff(
                "graph already consumed by backward; build a fresh graph".into(),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite { op: op_name });
        }
        let tracked = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRowVec(a, b)
            | Op::Mul(a, b)
            | Op::MulRowVec(a, b)
            | Op::MulColVec(a, b)
            | Op::ConcatRows(a, b)
            | Op::ConcatCols(a, b) => self.tracked(*a) || self.tracked(*b),
            Op::ScalarMix { beta, a, b } => {
                self.tracked(*beta) || self.tracked(*a) || self.tracked(*b)
            }
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::RowSoftmax(a)
            | Op::ColSoftmax(a)
            | Op::RowNormalize(a)
            | Op::RowStandardize { x: a, .. }
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::SliceRows { x: a, .. }
            | Op::SliceCols { x: a, .. }
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Bce { yhat: a, .. }
            | Op::IndexMap { x: a, .. } => self.tracked(*a),
        };
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, op, tracked))
    }

    fn want_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(CoreError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    // ── forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = (self.rows(a), self.cols(a));
        let (k2, n) = (self.rows(b), self.cols(b));
        if k != k2 {
            return Err(CoreError::shape(
                "matmul",
                format!("{}x{} @ {}x{}", m, k, k2, n),
            ));
        }
        let data = matmul_raw(self.data(a), self.data(b), m, k, n);
        self.emit("matmul", vec![m, n], data, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        self.emit("transpose", vec![c, r], out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.want_same_shape("add", a, b)?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        self.emit("add", self.shape(a).to_vec(), data, Op::Add(a, b))
    }

    /// Broadcast a `1 x c` vector onto every row of `a`.
    pub fn add_row_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        if self.rows(v) != 1 || self.cols(v) != c {
            return Err(CoreError::shape(
                "add_row_vec",
                format!("{}x{} + {}x{}", r, c, self.rows(v), self.cols(v)),
            ));
        }
        let x = self.data(a);
        let w = self.data(v);
        let data: Vec<f64> = (0..r * c).map(|i| x[i] + w[i % c]).collect();
        self.emit("add_row_vec", vec![r, c], data, Op::AddRowVec(a, v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.want_same_shape("mul", a, b)?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        self.emit("mul", self.shape(a).to_vec(), data, Op::Mul(a, b))
    }

    /// Scale every row of `a` elementwise by a `1 x c` vector.
    pub fn mul_row_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        if self.rows(v) != 1 || self.cols(v) != c {
            return Err(CoreError::shape(
                "mul_row_vec",
                format!("{}x{} * {}x{}", r, c, self.rows(v), self.cols(v)),
            ));
        }
        let x = self.data(a);
        let w = self.data(v);
        let data: Vec<f64> = (0..r * c).map(|i| x[i] * w[i % c]).collect();
        self.emit("mul_row_vec", vec![r, c], data, Op::MulRowVec(a, v))
    }

    /// Scale row `i` of `a` by entry `i` of a `1 x r` vector.
    pub fn mul_col_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        if self.rows(v) != 1 || self.cols(v) != r {
            return Err(CoreError::shape(
                "mul_col_vec",
                format!("{}x{} rows scaled by {}x{}", r, c, self.rows(v), self.cols(v)),
            ));
        }
        let x = self.data(a);
        let w = self.data(v);
        let data: Vec<f64> = (0..r * c).map(|i| x[i] * w[i / c]).collect();
        self.emit("mul_col_vec", vec![r, c], data, Op::MulColVec(a, v))
    }

    /// `beta * a + (1 - beta) * b` with `beta` a learnable `1 x 1` tensor.
    pub fn scalar_mix(&mut self, beta: NodeId, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.want_same_shape("scalar_mix", a, b)?;
        if self.nodes[beta.0].tensor.numel() != 1 {
            return Err(CoreError::shape("scalar_mix", "beta must be 1x1"));
        }
        let bv = self.data(beta)[0];
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| bv * x + (1.0 - bv) * y)
            .collect();
        self.emit(
            "scalar_mix",
            self.shape(a).to_vec(),
            data,
            Op::ScalarMix { beta, a, b },
        )
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let data: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        self.emit("scale", self.shape(a).to_vec(), data, Op::Scale(a, c))
    }

    /// Division by sqrt(d), the attention-logit stabilizer.
    pub fn scale_by_inv_sqrt(&mut self, a: NodeId, d: usize) -> Result<NodeId> {
        self.scale(a, 1.0 / (d as f64).sqrt())
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..c {
                let e = (row[j] - mx).exp();
                out[i * c + j] = e;
                s += e;
            }
            for j in 0..c {
                out[i * c + j] /= s;
            }
        }
        let id = self.emit("row_softmax", vec![r, c], out, Op::RowSoftmax(a))?;
        self.norm_records.push((id, NormAxis::Row));
        Ok(id)
    }

    pub fn col_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for j in 0..c {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..r {
                mx = mx.max(x[i * c + j]);
            }
            let mut s = 0.0;
            for i in 0..r {
                let e = (x[i * c + j] - mx).exp();
                out[i * c + j] = e;
                s += e;
            }
            for i in 0..r {
                out[i * c + j] /= s;
            }
        }
        let id = self.emit("col_softmax", vec![r, c], out, Op::ColSoftmax(a))?;
        self.norm_records.push((id, NormAxis::Col));
        Ok(id)
    }

    /// Normalize each row to sum 1. Inputs must be strictly positive rows
    /// (softmax outputs and their products are).
    pub fn row_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let s: f64 = x[i * c..(i + 1) * c].iter().sum();
            if s <= 0.0 {
                return Err(CoreError::Autodiff(
                    "row_normalize on a row with non-positive sum".into(),
                ));
            }
            for j in 0..c {
                out[i * c + j] = x[i * c + j] / s;
            }
        }
        let id = self.emit("row_normalize", vec![r, c], out, Op::RowNormalize(a))?;
        self.norm_records.push((id, NormAxis::Row));
        Ok(id)
    }

    fn row_standardize_impl(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        let x = self.data(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let s = (var + eps).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mu) / s;
            }
        }
        self.emit(
            "row_standardize",
            vec![r, c],
            out,
            Op::RowStandardize { x: a, eps },
        )
    }

    /// Layer norm over the feature axis of each row. Affine scaling, when a
    /// layer wants it, is composed from `mul_row_vec` / `add_row_vec`.
    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.row_standardize_impl(a, eps)
    }

    /// Instance norm as used here: each row normalized over its feature
    /// axis, no affine. Same computation as the non-affine layer norm.
    pub fn instance_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.row_standardize_impl(a, eps)
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self.data(a).iter().map(|&x| gelu_scalar(x)).collect();
        self.emit("gelu", self.shape(a).to_vec(), data, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.emit("sigmoid", self.shape(a).to_vec(), data, Op::Sigmoid(a))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, c) = (self.rows(a), self.cols(a));
        let (rb, cb) = (self.rows(b), self.cols(b));
        if c != cb {
            return Err(CoreError::shape(
                "concat_rows",
                format!("{} vs {} cols", c, cb),
            ));
        }
        let mut data = Vec::with_capacity((ra + rb) * c);
        data.extend_from_slice(self.data(a));
        data.extend_from_slice(self.data(b));
        self.emit("concat_rows", vec![ra + rb, c], data, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, ca) = (self.rows(a), self.cols(a));
        let (rb, cb) = (self.rows(b), self.cols(b));
        if r != rb {
            return Err(CoreError::shape(
                "concat_cols",
                format!("{} vs {} rows", r, rb),
            ));
        }
        let x = self.data(a);
        let y = self.data(b);
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(&x[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&y[i * cb..(i + 1) * cb]);
        }
        self.emit("concat_cols", vec![r, ca + cb], data, Op::ConcatCols(a, b))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        if start + len > r {
            return Err(CoreError::shape(
                "slice_rows",
                format!("rows {}..{} of {}", start, start + len, r),
            ));
        }
        let data = self.data(a)[start * c..(start + len) * c].to_vec();
        self.emit(
            "slice_rows",
            vec![len, c],
            data,
            Op::SliceRows { x: a, start, len },
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = (self.rows(a), self.cols(a));
        if start + len > c {
            return Err(CoreError::shape(
                "slice_cols",
                format!("cols {}..{} of {}", start, start + len, c),
            ));
        }
        let x = self.data(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&x[i * c + start..i * c + start + len]);
        }
        self.emit(
            "slice_cols",
            vec![r, len],
            data,
            Op::SliceCols { x: a, start, len },
        )
    }

    /// Multiply by an explicit dropout mask. The mask is a constant; pass
    /// inverted-scale masks (0 or 1/(1-rate)) for training, or skip the call
    /// entirely at inference.
    pub fn dropout(&mut self, a: NodeId, mask: &[f64]) -> Result<NodeId> {
        if mask.len() != self.nodes[a.0].tensor.numel() {
            return Err(CoreError::shape(
                "dropout",
                format!("mask len {} vs {}", mask.len(), self.nodes[a.0].tensor.numel()),
            ));
        }
        let m = self.input(Tensor::new(self.shape(a).to_vec(), mask.to_vec())?);
        self.mul(a, m)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.data(a).iter().sum();
        self.emit("sum", vec![1, 1], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].tensor.numel();
        let s: f64 = self.data(a).iter().sum::<f64>() / n as f64;
        self.emit("mean", vec![1, 1], vec![s], Op::Mean(a))
    }

    /// Frame-wise binary cross-entropy against constant 0/1 labels, mean
    /// over all entries, probabilities clamped to [clamp, 1-clamp].
    pub fn bce_loss(&mut self, yhat: NodeId, labels: &[f64], clamp: f64) -> Result<NodeId> {
        let n = self.nodes[yhat.0].tensor.numel();
        if labels.len() != n {
            return Err(CoreError::shape(
                "bce_loss",
                format!("labels len {} vs {}", labels.len(), n),
            ));
        }
        let mut s = 0.0;
        for (&p, &t) in self.data(yhat).iter().zip(labels) {
            let pc = p.clamp(clamp, 1.0 - clamp);
            s -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
        s /= n as f64;
        self.emit(
            "bce_loss",
            vec![1, 1],
            vec![s],
            Op::Bce {
                yhat,
                labels: labels.to_vec(),
                clamp,
            },
        )
    }

    /// Static gather: `out[i] = map[i].map(|j| x[j]).unwrap_or(0)`, with the
    /// matching scatter-add as gradient. Backs im2col, shifts and padding.
    pub fn index_map(
        &mut self,
        a: NodeId,
        out_shape: Vec<usize>,
        map: Vec<Option<usize>>,
    ) -> Result<NodeId> {
        let out_n: usize = out_shape.iter().product();
        if map.len() != out_n {
            return Err(CoreError::shape(
                "index_map",
                format!("map len {} vs shape {:?}", map.len(), out_shape),
            ));
        }
        let in_n = self.nodes[a.0].tensor.numel();
        if let Some(j) = map.iter().flatten().find(|&&j| j >= in_n) {
            return Err(CoreError::shape(
                "index_map",
                format!("index {} out of range {}", j, in_n),
            ));
        }
        let x = self.data(a);
        let data: Vec<f64> = map
            .iter()
            .map(|m| m.map(|j| x[j]).unwrap_or(0.0))
            .collect();
        self.emit("index_map", out_shape, data, Op::IndexMap { x: a, map })
    }

    /// Replicate a `1 x c` row `n` times.
    pub fn repeat_row(&mut self, a: NodeId, n: usize) -> Result<NodeId> {
        let c = self.cols(a);
        if self.rows(a) != 1 {
            return Err(CoreError::shape("repeat_row", "expected a 1 x c row"));
        }
        let map = (0..n * c).map(|i| Some(i % c)).collect();
        self.index_map(a, vec![n, c], map)
    }

    /// Mean of all rows as a `1 x c` vector.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let r = self.rows(a);
        let w = self.input(Tensor::filled(vec![1, r], 1.0 / r as f64));
        self.matmul(w, a)
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates `grad` on every
    /// `requires_grad` leaf, then clears the op tape; the graph cannot be
    /// extended or swept again.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(CoreError::Autodiff(
                "backward called twice on one graph".into(),
            ));
        }
        if self.nodes[loss.0].tensor.numel() != 1 {
            return Err(CoreError::Autodiff(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.tracked(loss) {
            return Err(CoreError::Autodiff(
                "backward on a tensor detached from every parameter".into(),
            ));
        }

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].tracked {
                continue;
            }
            if self.nodes[idx].tensor.requires_grad {
                let slot = self.nodes[idx].tensor.grad.get_or_insert_with(|| vec![0.0; g.len()]);
                for (acc, gv) in slot.iter_mut().zip(&g) {
                    *acc += gv;
                }
            }
            let op = self.ops[idx].clone();
            self.propagate(NodeId(idx), &op, &g, &mut grads);
        }

        // Leaves never reached still get a populated (zero) gradient.
        for node in &mut self.nodes {
            if node.tensor.requires_grad && node.tensor.grad.is_none() {
                node.tensor.grad = Some(vec![0.0; node.tensor.numel()]);
            }
        }

        self.ops.clear();
        self.ops.resize(self.nodes.len(), Op::Leaf);
        self.consumed = true;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, delta: &[f64]) {
        if !self.tracked(id) {
            return;
        }
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; delta.len()]);
        for (acc, d) in slot.iter_mut().zip(delta) {
            *acc += d;
        }
    }

    fn propagate(&self, out: NodeId, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.rows(*a), self.cols(*a));
                let nn = self.cols(*b);
                // da = g . b^T
                let bd = self.data(*b);
                let mut bt = vec![0.0; k * nn];
                for i in 0..k {
                    for j in 0..nn {
                        bt[j * k + i] = bd[i * nn + j];
                    }
                }
                let da = matmul_raw(g, &bt, m, nn, k);
                self.accumulate(grads, *a, &da);
                // db = a^T . g
                let ad = self.data(*a);
                let mut at = vec![0.0; k * m];
                for i in 0..m {
                    for j in 0..k {
                        at[j * m + i] = ad[i * k + j];
                    }
                }
                let db = matmul_raw(&at, g, k, m, nn);
                self.accumulate(grads, *b, &db);
            }
            Op::Transpose(a) => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let mut da = vec![0.0; r * c];
                for i in 0..c {
                    for j in 0..r {
                        da[j * c + i] = g[i * r + j];
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::AddRowVec(a, v) => {
                self.accumulate(grads, *a, g);
                let c = self.cols(*v);
                let mut dv = vec![0.0; c];
                for (i, gv) in g.iter().enumerate() {
                    dv[i % c] += gv;
                }
                self.accumulate(grads, *v, &dv);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect();
                self.accumulate(grads, *a, &da);
                let db: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect();
                self.accumulate(grads, *b, &db);
            }
            Op::MulRowVec(a, v) => {
                let c = self.cols(*v);
                let w = self.data(*v);
                let da: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * w[i % c]).collect();
                self.accumulate(grads, *a, &da);
                let x = self.data(*a);
                let mut dv = vec![0.0; c];
                for (i, gv) in g.iter().enumerate() {
                    dv[i % c] += gv * x[i];
                }
                self.accumulate(grads, *v, &dv);
            }
            Op::MulColVec(a, v) => {
                let r = self.cols(*v);
                let c = self.cols(*a);
                let w = self.data(*v);
                let da: Vec<f64> = g.iter().enumerate().map(|(i, g)| g * w[i / c]).collect();
                self.accumulate(grads, *a, &da);
                let x = self.data(*a);
                let mut dv = vec![0.0; r];
                for (i, gv) in g.iter().enumerate() {
                    dv[i / c] += gv * x[i];
                }
                self.accumulate(grads, *v, &dv);
            }
            Op::ScalarMix { beta, a, b } => {
                let bv = self.data(*beta)[0];
                let da: Vec<f64> = g.iter().map(|g| g * bv).collect();
                self.accumulate(grads, *a, &da);
                let db: Vec<f64> = g.iter().map(|g| g * (1.0 - bv)).collect();
                self.accumulate(grads, *b, &db);
                let x = self.data(*a);
                let y = self.data(*b);
                let dbeta: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * (x[i] - y[i]))
                    .sum();
                self.accumulate(grads, *beta, &[dbeta]);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.iter().map(|g| g * c).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::RowSoftmax(a) => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let y = self.data(out);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let dot: f64 = (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum();
                    for j in 0..c {
                        da[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::ColSoftmax(a) => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let y = self.data(out);
                let mut da = vec![0.0; r * c];
                for j in 0..c {
                    let dot: f64 = (0..r).map(|i| g[i * c + j] * y[i * c + j]).sum();
                    for i in 0..r {
                        da[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::RowNormalize(a) => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let y = self.data(out);
                let x = self.data(*a);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let s: f64 = x[i * c..(i + 1) * c].iter().sum();
                    let dot: f64 = (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum();
                    for j in 0..c {
                        da[i * c + j] = (g[i * c + j] - dot) / s;
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::RowStandardize { x: a, eps } => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let y = self.data(out);
                let x = self.data(*a);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    let row = &x[i * c..(i + 1) * c];
                    let mu = row.iter().sum::<f64>() / c as f64;
                    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
                    let s = (var + eps).sqrt();
                    let gm: f64 = (0..c).map(|j| g[i * c + j]).sum::<f64>() / c as f64;
                    let gy: f64 = (0..c).map(|j| g[i * c + j] * y[i * c + j]).sum::<f64>() / c as f64;
                    for j in 0..c {
                        da[i * c + j] = (g[i * c + j] - gm - y[i * c + j] * gy) / s;
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Gelu(a) => {
                let x = self.data(*a);
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| g * gelu_grad_scalar(x))
                    .collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let y = self.data(out);
                let da: Vec<f64> = g.iter().zip(y).map(|(g, &y)| g * y * (1.0 - y)).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::ConcatRows(a, b) => {
                let na = self.nodes[a.0].tensor.numel();
                self.accumulate(grads, *a, &g[..na]);
                self.accumulate(grads, *b, &g[na..]);
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = (self.rows(*a), self.cols(*a));
                let cb = self.cols(*b);
                let mut da = vec![0.0; r * ca];
                let mut db = vec![0.0; r * cb];
                for i in 0..r {
                    da[i * ca..(i + 1) * ca]
                        .copy_from_slice(&g[i * (ca + cb)..i * (ca + cb) + ca]);
                    db[i * cb..(i + 1) * cb]
                        .copy_from_slice(&g[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
                }
                self.accumulate(grads, *a, &da);
                self.accumulate(grads, *b, &db);
            }
            Op::SliceRows { x: a, start, len } => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let mut da = vec![0.0; r * c];
                da[start * c..(start + len) * c].copy_from_slice(g);
                self.accumulate(grads, *a, &da);
            }
            Op::SliceCols { x: a, start, len } => {
                let (r, c) = (self.rows(*a), self.cols(*a));
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    da[i * c + start..i * c + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *a, &da);
            }
            Op::Sum(a) => {
                let da = vec![g[0]; self.nodes[a.0].tensor.numel()];
                self.accumulate(grads, *a, &da);
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].tensor.numel();
                let da = vec![g[0] / n as f64; n];
                self.accumulate(grads, *a, &da);
            }
            Op::Bce { yhat, labels, clamp } => {
                let p = self.data(*yhat);
                let n = p.len() as f64;
                let da: Vec<f64> = p
                    .iter()
                    .zip(labels)
                    .map(|(&p, &t)| {
                        if p <= *clamp || p >= 1.0 - clamp {
                            0.0
                        } else {
                            g[0] * (p - t) / (p * (1.0 - p)) / n
                        }
                    })
                    .collect();
                self.accumulate(grads, *yhat, &da);
            }
            Op::IndexMap { x: a, map } => {
                let mut da = vec![0.0; self.nodes[a.0].tensor.numel()];
                for (i, m) in map.iter().enumerate() {
                    if let Some(j) = m {
                        da[*j] += g[i];
                    }
                }
                self.accumulate(grads, *a, &da);
            }
        }
    }
}
