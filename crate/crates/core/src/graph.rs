//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Parameters enter
//! the graph through [`Graph::param`]; calling [`Graph::backward`] on a scalar
//! node accumulates gradients into the matching [`ParamStore`] slots.

use std::collections::HashMap;

use crate::error::{ensure_shape, HiftError, Result};
use crate::kernels;
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    MulScalar(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Minimum(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    ConcatCols(Vec<NodeId>),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    MeanRows(NodeId),
    Sum(NodeId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    },
    XCorr(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Parameter leaf. Repeated calls with the same id return the same node,
    /// so every use of a parameter shares one gradient accumulator.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let node = self.push(store.value(id).clone(), Op::Param(id), true);
        self.params.insert(id, node);
        node
    }

    /// Node already bound to `id` in this graph, if any.
    pub fn param_node(&self, id: ParamId) -> Option<NodeId> {
        self.params.get(&id).copied()
    }

    fn binary_same(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), f)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, op, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same(a, b, f64::min, Op::Minimum(a, b))
    }

    fn row_broadcast(&mut self, x: NodeId, row: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (_, c) = self.value(x).dims2()?;
        let r = self.value(row);
        ensure_shape!(r.len() == c, "row operand has {} values, rows are {c} wide", r.len());
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (v, &b) in chunk.iter_mut().zip(r.data()) {
                *v = f(*v, b);
            }
        }
        Ok(out)
    }

    /// `x[i, :] + row` for every row `i`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.row_broadcast(x, row, |a, b| a + b)?;
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(v, Op::AddRow(x, row), ng))
    }

    /// `x[i, :] * row` for every row `i`.
    pub fn mul_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.row_broadcast(x, row, |a, b| a * b)?;
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(v, Op::MulRow(x, row), ng))
    }

    /// Multiplies every entry of `x` by the single value held in `s`.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        ensure_shape!(self.value(s).len() == 1, "mul_scalar expects a 1-element factor");
        let k = self.value(s).item();
        let v = self.value(x).map(|a| a * k);
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(v, Op::MulScalar(x, s), ng))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let v = self.value(x).map(|a| a * k);
        let ng = self.ng(x);
        self.push(v, Op::Scale(x, k), ng)
    }

    pub fn add_const(&mut self, x: NodeId, k: f64) -> NodeId {
        let v = self.value(x).map(|a| a + k);
        let ng = self.ng(x);
        self.push(v, Op::AddConst(x), ng)
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(x).map(f);
        let ng = self.ng(x);
        self.push(v, op, ng)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::matmul_nt(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMulNT(a, b), ng))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).t()?;
        let ng = self.ng(x);
        Ok(self.push(v, Op::Transpose(x), ng))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).reshape(shape)?;
        let ng = self.ng(x);
        Ok(self.push(v, Op::Reshape(x), ng))
    }

    /// Concatenates rank-2 nodes with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        ensure_shape!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            ensure_shape!(r == rows, "concat row mismatch: {r} vs {rows}");
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(&[rows, total], out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = kernels::softmax_rows(self.value(x))?;
        let ng = self.ng(x);
        Ok(self.push(v, Op::SoftmaxRows(x), ng))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = kernels::log_softmax_rows(self.value(x))?;
        let ng = self.ng(x);
        Ok(self.push(v, Op::LogSoftmaxRows(x), ng))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = kernels::layer_norm(self.value(x), self.value(gain), self.value(bias))?;
        let (xhat, inv_std) = kernels::layer_norm_stats(self.value(x))?;
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Column means of a rank-2 node, as a `1 x C` node.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).dims2()?;
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= r as f64);
        let ng = self.ng(x);
        Ok(self.push(Tensor::new(&[1, c], out)?, Op::MeanRows(x), ng))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        let ng = self.ng(x);
        self.push(v, Op::Sum(x), ng)
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let v = kernels::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(v, Op::Conv2d { x, w, b, stride, pad }, ng))
    }

    pub fn xcorr(&mut self, template: NodeId, search: NodeId) -> Result<NodeId> {
        let v = kernels::xcorr(self.value(template), self.value(search))?;
        let ng = self.ng(template) || self.ng(search);
        Ok(self.push(v, Op::XCorr(template, search), ng))
    }

    /// Back-propagates from the scalar `loss`, adding `d loss / d p` into the
    /// gradient slot of every parameter reachable from it.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(HiftError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.shape(loss), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(pid) = node.op {
                store.get_mut(pid).grad.add_assign(&g);
                continue;
            }
            for (input, gi) in self.local_grads(node, &g)? {
                if !self.ng(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot @ None => *slot = Some(gi),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(NodeId, Tensor)>> {
        let out = &node.value;
        let v = |id: NodeId| self.value(id);
        let grads = match &node.op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(v(*b), |gv, bv| gv * bv)?),
                (*b, g.zip_map(v(*a), |gv, av| gv * av)?),
            ],
            Op::Div(a, b) => vec![
                (*a, g.zip_map(v(*b), |gv, bv| gv / bv)?),
                (*b, g.zip_map(out, |gv, o| gv * o)?.zip_map(v(*b), |t, bv| -t / bv)?),
            ],
            Op::Minimum(a, b) => {
                // Ties route the gradient to the first operand.
                let mask_a = v(*a).zip_map(v(*b), |x, y| if x <= y { 1.0 } else { 0.0 })?;
                vec![
                    (*a, g.zip_map(&mask_a, |gv, m| gv * m)?),
                    (*b, g.zip_map(&mask_a, |gv, m| gv * (1.0 - m))?),
                ]
            }
            Op::AddRow(x, row) => {
                let (_, c) = g.dims2()?;
                let mut gr = vec![0.0; c];
                for chunk in g.data().chunks(c) {
                    for (o, gv) in gr.iter_mut().zip(chunk) {
                        *o += gv;
                    }
                }
                vec![(*x, g.clone()), (*row, Tensor::new(v(*row).shape(), gr)?)]
            }
            Op::MulRow(x, row) => {
                let (_, c) = g.dims2()?;
                let r = v(*row);
                let mut gx = g.clone();
                let mut gr = vec![0.0; c];
                for (gchunk, xchunk) in gx.data_mut().chunks_mut(c).zip(v(*x).data().chunks(c)) {
                    for j in 0..c {
                        gr[j] += gchunk[j] * xchunk[j];
                        gchunk[j] *= r.data()[j];
                    }
                }
                vec![(*x, gx), (*row, Tensor::new(r.shape(), gr)?)]
            }
            Op::MulScalar(x, s) => {
                let k = v(*s).item();
                let gs: f64 = g.data().iter().zip(v(*x).data()).map(|(a, b)| a * b).sum();
                vec![(*x, g.map(|t| t * k)), (*s, Tensor::new(v(*s).shape(), vec![gs])?)]
            }
            Op::Scale(x, k) => vec![(*x, g.map(|t| t * k))],
            Op::AddConst(x) => vec![(*x, g.clone())],
            Op::Exp(x) => vec![(*x, g.zip_map(out, |gv, o| gv * o)?)],
            Op::Log(x) => vec![(*x, g.zip_map(v(*x), |gv, xv| gv / xv)?)],
            Op::Relu(x) => vec![(*x, g.zip_map(v(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })?)],
            Op::Sigmoid(x) => vec![(*x, g.zip_map(out, |gv, o| gv * o * (1.0 - o))?)],
            Op::Softplus(x) => vec![(*x, g.zip_map(v(*x), |gv, xv| gv * sigmoid(xv))?)],
            Op::MatMul(a, b) => {
                let (m, k) = v(*a).dims2()?;
                let n = v(*b).dims2()?.1;
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                if self.ng(*a) {
                    kernels::gemm(m, n, k, g.data(), false, v(*b).data(), true, &mut ga, false);
                }
                if self.ng(*b) {
                    kernels::gemm(k, m, n, v(*a).data(), true, g.data(), false, &mut gb, false);
                }
                vec![(*a, Tensor::new(&[m, k], ga)?), (*b, Tensor::new(&[k, n], gb)?)]
            }
            Op::MatMulNT(a, b) => {
                // out = a b^T with a: m x k, b: n x k
                let (m, k) = v(*a).dims2()?;
                let n = v(*b).dims2()?.0;
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; n * k];
                if self.ng(*a) {
                    kernels::gemm(m, n, k, g.data(), false, v(*b).data(), false, &mut ga, false);
                }
                if self.ng(*b) {
                    kernels::gemm(n, m, k, g.data(), true, v(*a).data(), false, &mut gb, false);
                }
                vec![(*a, Tensor::new(&[m, k], ga)?), (*b, Tensor::new(&[n, k], gb)?)]
            }
            Op::Transpose(x) => vec![(*x, g.t()?)],
            Op::Reshape(x) => vec![(*x, g.reshape(v(*x).shape())?)],
            Op::ConcatCols(parts) => {
                let (rows, total) = g.dims2()?;
                let mut res = Vec::with_capacity(parts.len());
                let mut start = 0;
                for &p in parts {
                    let c = v(p).dims2()?.1;
                    let mut gp = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        gp.extend_from_slice(&g.data()[i * total + start..i * total + start + c]);
                    }
                    res.push((p, Tensor::new(&[rows, c], gp)?));
                    start += c;
                }
                res
            }
            Op::SoftmaxRows(x) => {
                let (_, c) = g.dims2()?;
                let mut gx = g.clone();
                for (gr, yr) in gx.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (gv, yv) in gr.iter_mut().zip(yr) {
                        *gv = yv * (*gv - dot);
                    }
                }
                vec![(*x, gx)]
            }
            Op::LogSoftmaxRows(x) => {
                let (_, c) = g.dims2()?;
                let mut gx = g.clone();
                for (gr, lr) in gx.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let total: f64 = gr.iter().sum();
                    for (gv, lv) in gr.iter_mut().zip(lr) {
                        *gv -= lv.exp() * total;
                    }
                }
                vec![(*x, gx)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (_, c) = g.dims2()?;
                let gamma = v(*gain).data();
                let mut gx = vec![0.0; g.len()];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                let rows = g.data().chunks(c).zip(xhat.data().chunks(c));
                for (i, (gr, xr)) in rows.enumerate() {
                    let mut mean_d = 0.0;
                    let mut mean_dx = 0.0;
                    for j in 0..c {
                        let d = gr[j] * gamma[j];
                        mean_d += d;
                        mean_dx += d * xr[j];
                        gg[j] += gr[j] * xr[j];
                        gb[j] += gr[j];
                    }
                    mean_d /= c as f64;
                    mean_dx /= c as f64;
                    for j in 0..c {
                        let d = gr[j] * gamma[j];
                        gx[i * c + j] = inv_std[i] * (d - mean_d - xr[j] * mean_dx);
                    }
                }
                vec![
                    (*x, Tensor::new(g.shape(), gx)?),
                    (*gain, Tensor::new(v(*gain).shape(), gg)?),
                    (*bias, Tensor::new(v(*bias).shape(), gb)?),
                ]
            }
            Op::MeanRows(x) => {
                let (r, c) = v(*x).dims2()?;
                let mut gx = Vec::with_capacity(r * c);
                for _ in 0..r {
                    gx.extend(g.data().iter().map(|t| t / r as f64));
                }
                vec![(*x, Tensor::new(&[r, c], gx)?)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(v(*x).shape(), g.item()))],
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = kernels::conv2d_backward(v(*x), v(*w), v(*b), *stride, *pad, g, self.ng(*x))?;
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Op::XCorr(t, s) => {
                let (gt, gs) = kernels::xcorr_backward(v(*t), v(*s), g)?;
                vec![(*t, gt), (*s, gs)]
            }
        };
        Ok(grads)
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

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let l = g.sum(x);
        g.backward(l, &mut store).unwrap();
        assert!(store.get(p).grad.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_square_gives_identity_gradient() {
        let mut store = ParamStore::new();
        let vals = vec![1.5, -2.0, 0.25, 4.0];
        let p = store.add("p", Tensor::new(&[4], vals.clone()).unwrap());
        let mut g = Graph::new();
        let x = g.param(&store, p);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let l = g.scale(s, 0.5);
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.get(p).grad.data(), vals.as_slice());
    }

    #[test]
    fn unreachable_parameters_untouched() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::ones(&[2]));
        let b = store.add("b", Tensor::ones(&[2]));
        store.get_mut(b).grad.fill(9.0);
        let mut g = Graph::new();
        let x = g.param(&store, a);
        let _unused = g.param(&store, b);
        let l = g.sum(x);
        g.backward(l, &mut store).unwrap();
        assert!(store.get(b).grad.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::ones(&[2]));
        let mut g = Graph::new();
        let x = g.param(&store, a);
        assert!(matches!(g.backward(x, &mut store), Err(HiftError::Contract(_))));
    }

    #[test]
    fn shared_parameter_accumulates_once_per_use() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let x1 = g.param(&store, a);
        let x2 = g.param(&store, a);
        assert_eq!(x1, x2);
        let y = g.add(x1, x2).unwrap();
        g.backward(y, &mut store).unwrap();
        assert_eq!(store.get(a).grad.item(), 2.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
