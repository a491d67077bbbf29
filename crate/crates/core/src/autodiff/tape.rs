//! Wengert tape: operations recorded during the forward pass, replayed in
//! reverse for gradients.
//!
//! Leaves are tagged as parameters, inputs, or constants. Gradients can be
//! requested for any leaf; asking for input-leaf gradients never perturbs
//! parameter gradients (every `backward` call builds a fresh adjoint set).
//! A leaf the loss does not depend on gets a zero gradient — that is a
//! documented outcome, not an error.

use std::collections::BTreeMap;

use crate::autodiff::array::Array;
use crate::error::{Error, Result};

/// Epsilon inside the batch-norm denominator `sqrt(var + eps)`.
pub const BATCHNORM_EPS: f64 = 1e-5;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

/// What kind of leaf a leaf node is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Model parameter: sampled / optimized.
    Param,
    /// Data input: differentiated for MRS, never updated.
    Input,
    /// Constant: no gradient tracked.
    Const,
}

#[derive(Debug, Clone)]
enum OpKind {
    Leaf(LeafKind),
    /// a (m x k) times b (k x n).
    MatMul(NodeId, NodeId),
    /// Elementwise add; rhs may be (1 x D) row-broadcast or (1 x 1) scalar.
    Add(NodeId, NodeId),
    /// Scalar node (1 x 1) times array node.
    Scale(NodeId, NodeId),
    /// Column-wise concatenation of 2-D nodes with equal row counts.
    Concat(Vec<NodeId>),
    Relu(NodeId),
    Tanh(NodeId),
    /// Elementwise power with a constant exponent.
    Power(NodeId, f64),
    /// Row-wise softmax over the last axis.
    Softmax(NodeId),
    /// Row-wise log-softmax over the last axis.
    LogSoftmax(NodeId),
    /// Normalize each column over the batch axis using batch statistics
    /// (population variance, `BATCHNORM_EPS`). Not affine.
    BatchNormTrain(NodeId),
    /// Normalize each column using the supplied running statistics.
    /// Only the variance is needed for the backward pass.
    BatchNormEval { input: NodeId, var: Vec<f64> },
    /// Gather rows of a table by constant indices.
    EmbedSelect {
        table: NodeId,
        indices: Vec<usize>,
    },
    /// Sum of all elements, producing a 1x1 scalar.
    ReduceSum(NodeId),
    /// Negative log-likelihood: `-sum_i log_probs[i, target_i]`.
    NllLoss {
        log_probs: NodeId,
        targets: Vec<usize>,
    },
}

struct Node {
    op: OpKind,
    value: Array,
    /// Per-column (mean, population variance) recorded by `BatchNormTrain`.
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Gradients of one scalar loss with respect to requested leaves.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_leaf: BTreeMap<NodeId, Array>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Array {
        &self.by_leaf[&id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Array)> {
        self.by_leaf.iter().map(|(k, v)| (*k, v))
    }
}

/// Append-only computation graph. Nodes are created in topological order, so
/// the backward pass is a single reverse sweep visiting each node once.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Batch statistics (per-column mean, population variance) recorded by a
    /// `batchnorm_train` node.
    pub fn batch_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        self.nodes[id.0]
            .batch_stats
            .as_ref()
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    pub fn leaf_kind(&self, id: NodeId) -> Option<LeafKind> {
        match self.nodes[id.0].op {
            OpKind::Leaf(kind) => Some(kind),
            _ => None,
        }
    }

    fn push(&mut self, op: OpKind, value: Array) -> NodeId {
        self.push_with_stats(op, value, None)
    }

    fn push_with_stats(
        &mut self,
        op: OpKind,
        value: Array,
        batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            batch_stats,
        });
        id
    }

    // ---- leaves ----------------------------------------------------------

    pub fn param(&mut self, value: Array) -> NodeId {
        self.push(OpKind::Leaf(LeafKind::Param), value)
    }

    pub fn input(&mut self, value: Array) -> NodeId {
        self.push(OpKind::Leaf(LeafKind::Input), value)
    }

    pub fn constant(&mut self, value: Array) -> NodeId {
        self.push(OpKind::Leaf(LeafKind::Const), value)
    }

    // ---- operators -------------------------------------------------------

    fn require_2d(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        let s = self.value(id).shape();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("expected a 2-D operand, got shape {:?}", s),
            });
        }
        Ok((s[0], s[1]))
    }

    /// `a (m x k) . b (k x n) -> (m x n)`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.require_2d("matmul", a)?;
        let (kb, n) = self.require_2d("matmul", b)?;
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("inner extents differ: {}x{} . {}x{}", m, ka, kb, n),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            ka,
            n,
            self.value(a).data(),
            (ka as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let value = Array::from_vec(vec![m, n], out)?;
        Ok(self.push(OpKind::MatMul(a, b), value))
    }

    /// Elementwise addition. The right operand may be the same shape, a
    /// `(1 x D)` row broadcast against `(N x D)`, or a `(1 x 1)` scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        let value = if sa == sb {
            self.value(a).zip_map(self.value(b), |x, y| x + y)
        } else if self.value(b).is_scalar() {
            let s = self.value(b).scalar_value();
            self.value(a).map(|x| x + s)
        } else if sb.len() == 2 && sa.len() == 2 && sb[0] == 1 && sb[1] == sa[1] {
            let (n, d) = (sa[0], sa[1]);
            let av = self.value(a).data();
            let bv = self.value(b).data();
            let mut out = Vec::with_capacity(n * d);
            for i in 0..n {
                for j in 0..d {
                    out.push(av[i * d + j] + bv[j]);
                }
            }
            Array::from_vec(vec![n, d], out)?
        } else {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!("cannot add {:?} and {:?}", sa, sb),
            });
        };
        Ok(self.push(OpKind::Add(a, b), value))
    }

    /// `scalar (1 x 1) * array`, elementwise.
    pub fn scale(&mut self, scalar: NodeId, array: NodeId) -> Result<NodeId> {
        if !self.value(scalar).is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "scale",
                detail: format!(
                    "first operand must be 1x1, got {:?}",
                    self.value(scalar).shape()
                ),
            });
        }
        let s = self.value(scalar).scalar_value();
        let value = self.value(array).map(|x| s * x);
        Ok(self.push(OpKind::Scale(scalar, array), value))
    }

    /// Concatenate 2-D nodes along the last axis (columns).
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat",
                detail: "needs at least one operand".into(),
            });
        }
        let (rows, _) = self.require_2d("concat", parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.require_2d("concat", p)?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    detail: format!("row counts differ: {} vs {}", rows, r),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let v = self.value(p).data();
                out.extend_from_slice(&v[i * w..(i + 1) * w]);
            }
        }
        let value = Array::from_vec(vec![rows, total], out)?;
        Ok(self.push(OpKind::Concat(parts.to_vec()), value))
    }

    /// Rectified linear unit; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(OpKind::Relu(a), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(OpKind::Tanh(a), value)
    }

    /// Elementwise `x^exponent` with a constant exponent.
    pub fn power(&mut self, a: NodeId, exponent: f64) -> NodeId {
        let value = self.value(a).map(|x| x.powf(exponent));
        self.push(OpKind::Power(a, exponent), value)
    }

    /// Row-wise softmax, stabilized by subtracting the row max.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, d) = self.require_2d("softmax", a)?;
        let x = self.value(a).data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            softmax_row(&x[i * d..(i + 1) * d], &mut out[i * d..(i + 1) * d]);
        }
        let value = Array::from_vec(vec![n, d], out)?;
        Ok(self.push(OpKind::Softmax(a), value))
    }

    /// Row-wise log-softmax (log-sum-exp stabilized).
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, d) = self.require_2d("log_softmax", a)?;
        let x = self.value(a).data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            for j in 0..d {
                out[i * d + j] = row[j] - lse;
            }
        }
        let value = Array::from_vec(vec![n, d], out)?;
        Ok(self.push(OpKind::LogSoftmax(a), value))
    }

    /// Non-affine batch normalization in training mode: each column is
    /// normalized by its batch mean and population variance. Records the
    /// batch statistics for running-average updates. Requires >= 2 rows.
    pub fn batchnorm_train(&mut self, a: NodeId) -> Result<NodeId> {
        let (n, d) = self.require_2d("batchnorm", a)?;
        if n < 2 {
            return Err(Error::BatchTooSmall { rows: n });
        }
        let x = self.value(a).data();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for j in 0..d {
            let mut s = 0.0;
            for i in 0..n {
                s += x[i * d + j];
            }
            let mu = s / n as f64;
            let mut ss = 0.0;
            for i in 0..n {
                let c = x[i * d + j] - mu;
                ss += c * c;
            }
            mean[j] = mu;
            var[j] = ss / n as f64;
        }
        let mut out = vec![0.0; n * d];
        for j in 0..d {
            let inv = 1.0 / (var[j] + BATCHNORM_EPS).sqrt();
            for i in 0..n {
                out[i * d + j] = (x[i * d + j] - mean[j]) * inv;
            }
        }
        let value = Array::from_vec(vec![n, d], out)?;
        Ok(self.push_with_stats(OpKind::BatchNormTrain(a), value, Some((mean, var))))
    }

    /// Non-affine batch normalization in evaluation mode: each column is
    /// normalized by the supplied running statistics, so the output of any
    /// row is independent of the rest of the batch.
    pub fn batchnorm_eval(&mut self, a: NodeId, mean: &[f64], var: &[f64]) -> Result<NodeId> {
        let (n, d) = self.require_2d("batchnorm", a)?;
        if mean.len() != d || var.len() != d {
            return Err(Error::ShapeMismatch {
                op: "batchnorm",
                detail: format!(
                    "running stats have {} features, input has {}",
                    mean.len(),
                    d
                ),
            });
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; n * d];
        for j in 0..d {
            let inv = 1.0 / (var[j] + BATCHNORM_EPS).sqrt();
            for i in 0..n {
                out[i * d + j] = (x[i * d + j] - mean[j]) * inv;
            }
        }
        let value = Array::from_vec(vec![n, d], out)?;
        Ok(self.push(
            OpKind::BatchNormEval {
                input: a,
                var: var.to_vec(),
            },
            value,
        ))
    }

    /// Gather rows of a `(V x D)` table by constant indices; the gradient
    /// scatter-adds back into the selected rows.
    pub fn embed_select(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (v, d) = self.require_2d("embed_select", table)?;
        if indices.is_empty() || indices.iter().any(|&i| i >= v) {
            return Err(Error::ShapeMismatch {
                op: "embed_select",
                detail: format!("indices {:?} out of range for {} rows", indices, v),
            });
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let value = Array::from_vec(vec![indices.len(), d], out)?;
        Ok(self.push(
            OpKind::EmbedSelect {
                table,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    /// Sum of all elements, as a 1x1 scalar.
    pub fn reduce_sum(&mut self, a: NodeId) -> NodeId {
        let value = Array::scalar(self.value(a).sum());
        self.push(OpKind::ReduceSum(a), value)
    }

    /// `-sum_i log_probs[i, target_i]` as a 1x1 scalar.
    pub fn nll_loss(&mut self, log_probs: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (n, d) = self.require_2d("nll_loss", log_probs)?;
        if targets.len() != n || targets.iter().any(|&t| t >= d) {
            return Err(Error::ShapeMismatch {
                op: "nll_loss",
                detail: format!(
                    "{} targets (max {:?}) against {} rows of {} classes",
                    targets.len(),
                    targets.iter().max(),
                    n,
                    d
                ),
            });
        }
        let lp = self.value(log_probs).data();
        let mut s = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            s -= lp[i * d + t];
        }
        Ok(self.push(
            OpKind::NllLoss {
                log_probs,
                targets: targets.to_vec(),
            },
            Array::scalar(s),
        ))
    }

    // ---- backward --------------------------------------------------------

    /// Reverse-mode gradients of the scalar `loss` with respect to `wrt`
    /// leaves. Every requested leaf gets an entry; a leaf the loss does not
    /// reach gets zeros.
    pub fn backward(&self, loss: NodeId, wrt: &[NodeId]) -> Result<Gradients> {
        let loss_val = self.value(loss);
        if !loss_val.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_val.shape().to_vec(),
            });
        }
        for &id in wrt {
            if id.0 >= self.nodes.len() || self.leaf_kind(id).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "node {} is not a leaf on this tape",
                    id.0
                )));
            }
        }

        let mut adjoint: Vec<Option<Array>> = vec![None; self.nodes.len()];
        adjoint[loss.0] = Some(Array::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            self.accumulate(idx, &g, &mut adjoint);
            if wrt.iter().any(|w| w.0 == idx) {
                adjoint[idx] = Some(g); // keep requested leaves
            }
        }

        let mut by_leaf = BTreeMap::new();
        for &id in wrt {
            let grad = adjoint[id.0]
                .take()
                .unwrap_or_else(|| Array::zeros(self.value(id).shape()));
            by_leaf.insert(id, grad);
        }
        Ok(Gradients { by_leaf })
    }

    /// Propagate the adjoint `g` of node `idx` into its inputs.
    fn accumulate(&self, idx: usize, g: &Array, adjoint: &mut Vec<Option<Array>>) {
        let mut bump = |id: NodeId, delta: Array, adjoint: &mut Vec<Option<Array>>| {
            match &mut adjoint[id.0] {
                Some(a) => a.axpy(1.0, &delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[idx].op {
            OpKind::Leaf(_) => {}
            OpKind::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                // da += g . b^T
                let mut da = vec![0.0; m * k];
                gemm(
                    m,
                    n,
                    k,
                    g.data(),
                    (n as isize, 1),
                    bv.data(),
                    (1, n as isize),
                    0.0,
                    &mut da,
                );
                bump(*a, Array::from_vec(vec![m, k], da).unwrap(), adjoint);
                // db += a^T . g
                let mut db = vec![0.0; k * n];
                gemm(
                    k,
                    m,
                    n,
                    av.data(),
                    (1, k as isize),
                    g.data(),
                    (n as isize, 1),
                    0.0,
                    &mut db,
                );
                bump(*b, Array::from_vec(vec![k, n], db).unwrap(), adjoint);
            }
            OpKind::Add(a, b) => {
                bump(*a, g.clone(), adjoint);
                let sb = self.value(*b).shape().to_vec();
                if sb == g.shape() {
                    bump(*b, g.clone(), adjoint);
                } else if self.value(*b).is_scalar() {
                    bump(*b, Array::scalar(g.sum()), adjoint);
                } else {
                    // (1 x D) row broadcast: sum the upstream over rows.
                    let (n, d) = (g.rows(), g.cols());
                    let mut s = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            s[j] += g.get2(i, j);
                        }
                    }
                    bump(*b, Array::from_vec(vec![1, d], s).unwrap(), adjoint);
                }
            }
            OpKind::Scale(scalar, array) => {
                let s = self.value(*scalar).scalar_value();
                let av = self.value(*array);
                bump(*array, g.map(|x| s * x), adjoint);
                let ds: f64 = g.data().iter().zip(av.data()).map(|(&gi, &ai)| gi * ai).sum();
                bump(*scalar, Array::scalar(ds), adjoint);
            }
            OpKind::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut slice = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        for j in 0..w {
                            slice.push(g.get2(i, offset + j));
                        }
                    }
                    bump(p, Array::from_vec(vec![rows, w], slice).unwrap(), adjoint);
                    offset += w;
                }
            }
            OpKind::Relu(a) => {
                let x = self.value(*a);
                bump(*a, g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }), adjoint);
            }
            OpKind::Tanh(a) => {
                let y = &self.nodes[idx].value;
                bump(*a, g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi)), adjoint);
            }
            OpKind::Power(a, p) => {
                let x = self.value(*a);
                let p = *p;
                bump(*a, g.zip_map(x, |gi, xi| gi * p * xi.powf(p - 1.0)), adjoint);
            }
            OpKind::Softmax(a) => {
                let y = &self.nodes[idx].value;
                let (n, d) = (y.rows(), y.cols());
                let mut da = Array::zeros(&[n, d]);
                for i in 0..n {
                    let mut dot = 0.0;
                    for j in 0..d {
                        dot += g.get2(i, j) * y.get2(i, j);
                    }
                    for j in 0..d {
                        da.set2(i, j, y.get2(i, j) * (g.get2(i, j) - dot));
                    }
                }
                bump(*a, da, adjoint);
            }
            OpKind::LogSoftmax(a) => {
                let y = &self.nodes[idx].value; // log-probabilities
                let (n, d) = (y.rows(), y.cols());
                let mut da = Array::zeros(&[n, d]);
                for i in 0..n {
                    let mut rowsum = 0.0;
                    for j in 0..d {
                        rowsum += g.get2(i, j);
                    }
                    for j in 0..d {
                        da.set2(i, j, g.get2(i, j) - y.get2(i, j).exp() * rowsum);
                    }
                }
                bump(*a, da, adjoint);
            }
            OpKind::BatchNormTrain(a) => {
                let y = &self.nodes[idx].value; // normalized output
                let (_, var) = self.nodes[idx].batch_stats.as_ref().unwrap();
                let (n, d) = (y.rows(), y.cols());
                let nf = n as f64;
                let mut da = Array::zeros(&[n, d]);
                for j in 0..d {
                    let inv = 1.0 / (var[j] + BATCHNORM_EPS).sqrt();
                    let mut gsum = 0.0;
                    let mut gysum = 0.0;
                    for i in 0..n {
                        gsum += g.get2(i, j);
                        gysum += g.get2(i, j) * y.get2(i, j);
                    }
                    for i in 0..n {
                        let v = inv / nf * (nf * g.get2(i, j) - gsum - y.get2(i, j) * gysum);
                        da.set2(i, j, v);
                    }
                }
                bump(*a, da, adjoint);
            }
            OpKind::BatchNormEval { input, var, .. } => {
                let (n, d) = (g.rows(), g.cols());
                let mut da = Array::zeros(&[n, d]);
                for j in 0..d {
                    let inv = 1.0 / (var[j] + BATCHNORM_EPS).sqrt();
                    for i in 0..n {
                        da.set2(i, j, g.get2(i, j) * inv);
                    }
                }
                bump(*input, da, adjoint);
            }
            OpKind::EmbedSelect { table, indices } => {
                let tv = self.value(*table);
                let (v, d) = (tv.rows(), tv.cols());
                let mut dt = Array::zeros(&[v, d]);
                for (row, &i) in indices.iter().enumerate() {
                    for j in 0..d {
                        let cur = dt.get2(i, j);
                        dt.set2(i, j, cur + g.get2(row, j));
                    }
                }
                bump(*table, dt, adjoint);
            }
            OpKind::ReduceSum(a) => {
                let s = g.scalar_value();
                bump(*a, Array::filled(self.value(*a).shape(), s), adjoint);
            }
            OpKind::NllLoss { log_probs, targets } => {
                let s = g.scalar_value();
                let lp = self.value(*log_probs);
                let (n, d) = (lp.rows(), lp.cols());
                let mut da = Array::zeros(&[n, d]);
                for (i, &t) in targets.iter().enumerate() {
                    da.set2(i, t, -s);
                }
                bump(*log_probs, da, adjoint);
            }
        }
    }
}

/// Blend running batch-norm statistics toward freshly observed batch
/// statistics: `running <- (1 - momentum) * running + momentum * batch`,
/// per feature. `momentum` must lie in [0, 1].
pub fn batchnorm_stats_update(
    running: (&[f64], &[f64]),
    batch: (&[f64], &[f64]),
    momentum: f64,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert!((0.0..=1.0).contains(&momentum));
    debug_assert_eq!(running.0.len(), batch.0.len());
    let blend = |r: &[f64], b: &[f64]| -> Vec<f64> {
        r.iter()
            .zip(b)
            .map(|(&rv, &bv)| (1.0 - momentum) * rv + momentum * bv)
            .collect()
    };
    (blend(running.0, batch.0), blend(running.1, batch.1))
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - m).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `c = alpha * A . B + beta * c` with explicit strides, row-major output.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(t: &Tape, id: NodeId) -> Vec<f64> {
        t.value(id).data().to_vec()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 3], vec![0.0, 0.0, 0.0]).unwrap());
        let y = t.softmax(x).unwrap();
        for &p in t.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_definition() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = t.relu(x);
        assert_eq!(vec1(&t, y), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn batchnorm_hand_computed_column() {
        // column [2, 4]: mean 3, population variance 1, output ~ -/+ 0.999995
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![2, 1], vec![2.0, 4.0]).unwrap());
        let y = t.batchnorm_train(x).unwrap();
        let v = vec1(&t, y);
        assert!((v[0] - (-0.9999950000374997)).abs() < 1e-12);
        assert!((v[1] - 0.9999950000374997).abs() < 1e-12);
        let (mean, var) = t.batch_stats(y).unwrap();
        assert_eq!(mean, &[3.0]);
        assert_eq!(var, &[1.0]);
    }

    #[test]
    fn batchnorm_train_rejects_singleton_batch() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            t.batchnorm_train(x),
            Err(Error::BatchTooSmall { rows: 1 })
        ));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 2], vec![-1.0, 2.0]).unwrap());
        let y = t.relu(x);
        let loss = t.reduce_sum(y);
        let g = t.backward(loss, &[x]).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 1.0]);

        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 1], vec![0.0]).unwrap());
        let y = t.relu(x);
        let loss = t.reduce_sum(y);
        let g = t.backward(loss, &[x]).unwrap();
        assert_eq!(g.get(x).data(), &[0.0]);
    }

    #[test]
    fn log_softmax_first_component_gradient() {
        // d/dx of log_softmax(x)[0] at x = [0, 0] is [0.5, -0.5]
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let lp = t.log_softmax(x).unwrap();
        let pick = t.constant(Array::from_vec(vec![2, 1], vec![1.0, 0.0]).unwrap());
        let loss = t.matmul(lp, pick).unwrap();
        let g = t.backward(loss, &[x]).unwrap();
        let gx = g.get(x).data();
        assert!((gx[0] - 0.5).abs() < 1e-12);
        assert!((gx[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let y = t.relu(x);
        assert!(matches!(
            t.backward(y, &[x]),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn detached_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.input(Array::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let unused = t.param(Array::from_vec(vec![1, 2], vec![3.0, 4.0]).unwrap());
        let y = t.relu(x);
        let loss = t.reduce_sum(y);
        let g = t.backward(loss, &[x, unused]).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn stats_update_blend() {
        // momentum 1 returns the batch, momentum 0 keeps the running values
        let r = (vec![0.0], vec![1.0]);
        let b = (vec![1.0], vec![2.0]);
        let (m, v) = batchnorm_stats_update((&r.0, &r.1), (&b.0, &b.1), 1.0);
        assert_eq!((m, v), (vec![1.0], vec![2.0]));
        let (m, v) = batchnorm_stats_update((&r.0, &r.1), (&b.0, &b.1), 0.0);
        assert_eq!((m, v), (vec![0.0], vec![1.0]));
        let (m, v) = batchnorm_stats_update((&r.0, &r.1), (&b.0, &b.1), 0.1);
        assert!((m[0] - 0.1).abs() < 1e-15 && (v[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn embed_select_gathers_and_scatters() {
        let mut t = Tape::new();
        let table = t.param(Array::from_vec(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let sel = t.embed_select(table, &[2, 0, 2]).unwrap();
        assert_eq!(vec1(&t, sel), vec![5., 6., 1., 2., 5., 6.]);
        let loss = t.reduce_sum(sel);
        let g = t.backward(loss, &[table]).unwrap();
        // row 2 selected twice, row 0 once, row 1 never
        assert_eq!(g.get(table).data(), &[1., 1., 0., 0., 2., 2.]);
    }

    #[test]
    fn matmul_shape_mismatch_names_operator() {
        let mut t = Tape::new();
        let a = t.input(Array::zeros(&[2, 3]));
        let b = t.input(Array::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::ShapeMismatch { op, .. }) => assert_eq!(op, "matmul"),
            other => panic!("expected shape mismatch, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let build = || {
            let mut t = Tape::new();
            let x = t.input(Array::from_vec(vec![2, 2], vec![0.3, -1.2, 2.2, 0.01]).unwrap());
            let w = t.param(Array::from_vec(vec![2, 2], vec![0.5, -0.25, 1.5, 0.75]).unwrap());
            let h = t.matmul(x, w).unwrap();
            let r = t.relu(h);
            let s = t.softmax(r).unwrap();
            t.value(s).data().to_vec()
        };
        let a = build();
        let b = build();
        assert_eq!(a, b, "identical graphs must produce bit-identical values");
    }
}
