//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! A [`Graph`] records every operation applied to its nodes. Leaves created
//! with [`Graph::param`] require gradients; leaves created with
//! [`Graph::constant`] do not, and gradients never flow into them.
//! [`Graph::backward`] replays the tape in reverse from a scalar node.

use super::tensor::{kernels, Activation, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddBias(NodeId, NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Activation(NodeId, Activation),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize },
    SliceCols { x: NodeId, start: usize },
    Sum(NodeId),
    Nll {
        probs: NodeId,
        labels: Vec<usize>,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape. Single-threaded; build one per worker.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`. Nodes that did not
    /// influence the loss get a zero tensor of their shape.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let out = self.value(a).transpose()?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    fn zip(&mut self, name: &'static str, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(name, out, op, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let out = self.value(a).map(|v| v * factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    /// Adds a bias vector to every row: `x[.., n] + b[n]`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (_, cols) = vx.rows_cols();
        if vb.numel() != cols {
            return Err(Error::shape(
                "add_bias",
                format!("rows of width {cols} with bias {:?}", vb.shape()),
            ));
        }
        let b = vb.data();
        let data = vx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % cols])
            .collect();
        let out = Tensor::from_parts(vx.shape().to_vec(), data);
        self.push("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    /// `x·w + b` for a matrix `x`, weight `w` and bias vector `b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let out = v.softmax(v.rank() - 1)?;
        self.push("softmax", out, Op::SoftmaxRows(x), &[x])
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let (rows, d) = vx.rows_cols();
        if vg.numel() != d || vb.numel() != d {
            return Err(Error::shape(
                "layer_norm",
                format!("width {d} with gamma {:?} and beta {:?}", vg.shape(), vb.shape()),
            ));
        }
        let mut xhat = vec![0.0; vx.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; vx.numel()];
        for r in 0..rows {
            let row = &vx.data()[r * d..(r + 1) * d];
            let (mean, is) = kernels::moments(row, eps);
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let out = Tensor::from_parts(vx.shape().to_vec(), out);
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        self.push("layer_norm", out, op, &[x, gamma, beta])
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(kind.name(), out, Op::Activation(x, kind), &[x])
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        self.activation(x, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.activation(x, Activation::Tanh)
    }

    /// Stacks matrices vertically. All parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let cols = self.value(*first).dims2("concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_rows")?;
            if c != cols {
                return Err(Error::shape("concat_rows", format!("column count {c} vs {cols}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_parts(vec![rows, cols], data);
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Joins matrices side by side. All parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let rows = self.value(*first).dims2("concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("row count {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::from_parts(vec![rows, total], data);
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.value(x).dims2("slice_rows")?;
        if len == 0 || start + len > r {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {r}", start + len)));
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::from_parts(vec![len, c], data);
        self.push("slice_rows", out, Op::SliceRows { x, start }, &[x])
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.value(x).dims2("slice_cols")?;
        if len == 0 || start + len > c {
            return Err(Error::shape("slice_cols", format!("cols {start}..{} of {c}", start + len)));
        }
        let v = self.value(x).data();
        let data = (0..r)
            .flat_map(|i| v[i * c + start..i * c + start + len].iter().copied())
            .collect();
        let out = Tensor::from_parts(vec![r, len], data);
        self.push("slice_cols", out, Op::SliceCols { x, start }, &[x])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Mean negative log-likelihood of the true classes:
    /// `−(1/N)·Σᵢ log(max(p[i, yᵢ], eps))` over rows of `probs`.
    pub fn nll(&mut self, probs: NodeId, labels: &[usize], eps: f64) -> Result<NodeId> {
        let (n, c) = self.value(probs).dims2("nll")?;
        if labels.len() != n {
            return Err(Error::shape("nll", format!("{n} rows but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::shape("nll", format!("label {bad} out of range for {c} classes")));
        }
        let p = self.value(probs);
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &y)| p.at(i, y).max(eps).ln())
            .sum::<f64>()
            / n as f64;
        let op = Op::Nll {
            probs,
            labels: labels.to_vec(),
            eps,
        };
        self.push("nll", Tensor::scalar(loss), op, &[probs])
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                node.requires_grad.then(|| match g {
                    Some(g) => Tensor::from_parts(node.value.shape().to_vec(), g),
                    None => Tensor::zeros(node.value.shape()),
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Accumulates into a parent's gradient buffer when it needs one.
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id.0].requires_grad {
                return;
            }
            let buf = grads[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.numel()]);
            f(buf);
        };
        let val = |id: NodeId| &nodes[id.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).rows_cols();
                let n = val(*b).rows_cols().1;
                let bv = val(*b).data();
                acc(*a, &mut |buf| kernels::matmul_a_bt_acc(g, bv, m, n, k, buf));
                let av = val(*a).data();
                acc(*b, &mut |buf| kernels::matmul_at_b_acc(av, g, m, k, n, buf));
            }
            Op::Transpose(a) => {
                let (r, c) = val(*a).rows_cols();
                let t = kernels::transpose(g, c, r);
                acc(*a, &mut |buf| add_into(buf, &t));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(o, v)| *o -= v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |buf| {
                    for ((o, gi), y) in buf.iter_mut().zip(g).zip(bv) {
                        *o += gi * y;
                    }
                });
                acc(*b, &mut |buf| {
                    for ((o, gi), x) in buf.iter_mut().zip(g).zip(av) {
                        *o += gi * x;
                    }
                });
            }
            Op::Scale(a, factor) => {
                acc(*a, &mut |buf| buf.iter_mut().zip(g).for_each(|(o, v)| *o += factor * v));
            }
            Op::AddBias(x, b) => {
                acc(*x, &mut |buf| add_into(buf, g));
                let cols = val(*b).numel();
                acc(*b, &mut |buf| {
                    for (i, v) in g.iter().enumerate() {
                        buf[i % cols] += v;
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let (_, cols) = node.value.rows_cols();
                acc(*x, &mut |buf| {
                    for ((gr, yr), br) in g.chunks(cols).zip(y.chunks(cols)).zip(buf.chunks_mut(cols)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            br[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = val(*gamma).numel();
                let gv = val(*gamma).data();
                acc(*x, &mut |buf| {
                    let mut dxhat = vec![0.0; d];
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        for j in 0..d {
                            dxhat[j] = gr[j] * gv[j];
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let dot: f64 = dxhat.iter().zip(hr).map(|(a, b)| a * b).sum();
                        let scale = is / d as f64;
                        for j in 0..d {
                            buf[r * d + j] += scale * (d as f64 * dxhat[j] - sum - hr[j] * dot);
                        }
                    }
                });
                acc(*gamma, &mut |buf| {
                    for (i, (gi, h)) in g.iter().zip(xhat).enumerate() {
                        buf[i % d] += gi * h;
                    }
                });
                acc(*beta, &mut |buf| {
                    for (i, gi) in g.iter().enumerate() {
                        buf[i % d] += gi;
                    }
                });
            }
            Op::Activation(x, kind) => {
                let (xv, yv) = (val(*x).data(), node.value.data());
                acc(*x, &mut |buf| {
                    for (((o, gi), xi), yi) in buf.iter_mut().zip(g).zip(xv).zip(yv) {
                        *o += gi * kind.derivative(*xi, *yi);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).numel();
                    acc(*p, &mut |buf| add_into(buf, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.rows_cols();
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).rows_cols().1;
                    acc(*p, &mut |buf| {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + w];
                            add_into(&mut buf[r * w..(r + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let c = val(*x).rows_cols().1;
                acc(*x, &mut |buf| add_into(&mut buf[start * c..start * c + g.len()], g));
            }
            Op::SliceCols { x, start } => {
                let c = val(*x).rows_cols().1;
                let (rows, len) = node.value.rows_cols();
                acc(*x, &mut |buf| {
                    for r in 0..rows {
                        let dst = &mut buf[r * c + start..r * c + start + len];
                        add_into(dst, &g[r * len..(r + 1) * len]);
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |buf| buf.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Nll { probs, labels, eps } => {
                let p = val(*probs);
                let (n, c) = p.rows_cols();
                acc(*probs, &mut |buf| {
                    for (i, &y) in labels.iter().enumerate() {
                        let pv = p.at(i, y);
                        if pv > *eps {
                            buf[i * c + y] -= g[0] / (n as f64 * pv);
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
