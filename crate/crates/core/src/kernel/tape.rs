use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::attention::{attention_backward, attention_forward, AttentionGrads, AttentionLayout};
use super::ops::{self, Activation};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<f64>, inv_std: Vec<f64> },
    Activation { x: NodeId, kind: Activation },
    Softmax { x: NodeId },
    Mask { x: NodeId, mask: Vec<f64> },
    Gather { x: NodeId, index: Vec<Option<usize>> },
    SliceRows { x: NodeId, start: usize },
    Transpose { x: NodeId },
    MeanRows { x: NodeId },
    ConcatCols { a: NodeId, b: NodeId },
    Attention { q: NodeId, k: NodeId, v: NodeId, bias: Option<NodeId>, layout: AttentionLayout, probs: Vec<f64> },
    CrossEntropy { logits: NodeId, label: usize, probs: Vec<f64> },
    Sum { x: NodeId },
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` only for parameters, which live in the borrowed parameter slice.
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Records primitive applications for one forward pass so that
/// [`Tape::backward`] can replay their adjoints in reverse order.
///
/// Parameters are borrowed, not copied; their gradients come back indexed
/// by position in the parameter slice.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p [Tensor],
    param_nodes: Vec<Option<NodeId>>,
    nodes: Vec<Node>,
    attention_macs: u64,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Tape {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
            attention_macs: 0,
        }
    }

    /// Tape with no parameters, for standalone kernel use.
    pub fn detached() -> Tape<'static> {
        Tape::new(&[])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulates spent inside attention score and mixing loops.
    pub fn attention_macs(&self) -> u64 {
        self.attention_macs
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("only parameters are stored out of line"),
        }
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = self.inputs_require_grad(&op);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn inputs_require_grad(&self, op: &Op) -> bool {
        let rg = |id: &NodeId| self.nodes[id.0].requires_grad;
        match op {
            Op::Leaf | Op::Param(_) => false,
            Op::Linear { x, w, b } => rg(x) || rg(w) || b.as_ref().is_some_and(rg),
            Op::Add(a, b) | Op::Mul(a, b) | Op::ConcatCols { a, b } => rg(a) || rg(b),
            Op::LayerNorm { x, gamma, beta, .. } => rg(x) || rg(gamma) || rg(beta),
            Op::Attention { q, k, v, bias, .. } => rg(q) || rg(k) || rg(v) || bias.as_ref().is_some_and(rg),
            Op::Scale(x, _)
            | Op::Activation { x, .. }
            | Op::Softmax { x }
            | Op::Mask { x, .. }
            | Op::Gather { x, .. }
            | Op::SliceRows { x, .. }
            | Op::Transpose { x }
            | Op::MeanRows { x }
            | Op::Sum { x }
            | Op::CrossEntropy { logits: x, .. } => rg(x),
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Some(value),
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Node for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize) -> NodeId {
        if let Some(id) = self.param_nodes[index] {
            return id;
        }
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
            requires_grad: true,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes[index] = Some(id);
        id
    }

    /// `y = x W + b` over the trailing axis of `x`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[0] {
            return Err(Error::dim("linear", format!("x {:?} · W {:?}", xv.shape(), wv.shape())));
        }
        let (inner, cols) = (wv.shape()[0], wv.shape()[1]);
        let bias = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.numel() != cols {
                    return Err(Error::dim("linear", format!("bias {:?} for {cols} outputs", bv.shape())));
                }
                Some(bv.data())
            }
            None => None,
        };
        let data = ops::matmul_bias(xv.data(), wv.data(), bias, xv.rows(), inner, cols);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = cols;
        let out = Tensor::new(shape, data)?;
        self.push(Op::Linear { x, w, b }, out, "linear")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim("add", format!("{:?} + {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim("mul", format!("{:?} * {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * c).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::Scale(x, c), out, "scale")
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if gv.numel() != d || bv.numel() != d {
            return Err(Error::dim("layer_norm", format!("affine size {} / {} for width {d}", gv.numel(), bv.numel())));
        }
        let (data, xhat, inv_std) = ops::layer_norm_forward(xv.data(), gv.data(), bv.data(), d);
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::LayerNorm { x, gamma, beta, xhat, inv_std }, out, "layer_norm")
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::Activation { x, kind }, out, "activation")
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(xv.cols()) {
            ops::softmax_in_place(row);
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::Softmax { x }, out, "softmax_rows")
    }

    /// Inverted dropout: each entry is zeroed with probability `p`, survivors
    /// scaled by `1 / (1 - p)`. `p == 0` records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::Mask { x, mask }, out, "dropout")
    }

    /// Output row `r` is row `index[r]` of `x`; `None` rows are filled from
    /// consecutive rows of `pad` (zeros when `pad` is absent) and carry no
    /// gradient.
    pub fn gather_rows(&mut self, x: NodeId, index: Vec<Option<usize>>, pad: Option<&Tensor>) -> Result<NodeId> {
        let xv = self.value(x);
        let c = xv.cols();
        let n_pad = index.iter().filter(|i| i.is_none()).count();
        if let Some(p) = pad {
            if p.cols() != c || p.rows() < n_pad {
                return Err(Error::dim("gather_rows", format!("pad {:?} for {n_pad} rows of width {c}", p.shape())));
            }
        }
        let mut data = Vec::with_capacity(index.len() * c);
        let mut next_pad = 0;
        for ix in &index {
            match *ix {
                Some(r) if r < xv.rows() => data.extend_from_slice(xv.row(r)),
                Some(r) => return Err(Error::dim("gather_rows", format!("row {r} out of {}", xv.rows()))),
                None => {
                    match pad {
                        Some(p) => data.extend_from_slice(p.row(next_pad)),
                        None => data.extend(core::iter::repeat(0.0).take(c)),
                    }
                    next_pad += 1;
                }
            }
        }
        let out = Tensor::new(vec![index.len(), c], data)?;
        self.push(Op::Gather { x, index }, out, "gather_rows")
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if start + len > xv.rows() || len == 0 {
            return Err(Error::dim("slice_rows", format!("{start}..{} of {} rows", start + len, xv.rows())));
        }
        let c = xv.cols();
        let data = xv.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(vec![len, c], data)?;
        self.push(Op::SliceRows { x, start }, out, "slice_rows")
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).transpose();
        self.push(Op::Transpose { x }, out, "transpose")
    }

    /// Column means: `[r, c] -> [1, c]`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        let mut data = vec![0.0; c];
        for row in xv.data().chunks_exact(c) {
            for (o, v) in data.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / r as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let out = Tensor::new(vec![1, c], data)?;
        self.push(Op::MeanRows { x }, out, "mean_rows")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::dim("concat_cols", format!("{:?} | {:?}", av.shape(), bv.shape())));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut data = Vec::with_capacity(av.numel() + bv.numel());
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let out = Tensor::new(vec![av.rows(), ca + cb], data)?;
        self.push(Op::ConcatCols { a, b }, out, "concat_cols")
    }

    /// Multi-head attention `softmax(Q Kᵀ / sqrt(d_head) + B) V` per window,
    /// heads concatenated along the feature axis.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, bias: Option<NodeId>, layout: AttentionLayout) -> Result<NodeId> {
        let d = layout.check(
            self.value(q).shape(),
            self.value(k).shape(),
            self.value(v).shape(),
            bias.map(|b| self.value(b).shape()),
        )?;
        let fwd = attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            bias.map(|b| self.value(b).data()),
            &layout,
            d,
        );
        self.attention_macs += fwd.macs;
        let out = Tensor::new(vec![layout.query_rows(), d], fwd.out)?;
        self.push(Op::Attention { q, k, v, bias, layout, probs: fwd.probs }, out, "attention")
    }

    /// Attention weights recorded by an attention node, `[window][head][query][key]`.
    pub fn attention_probs(&self, id: NodeId) -> Option<(&[f64], &AttentionLayout)> {
        match &self.nodes[id.0].op {
            Op::Attention { probs, layout, .. } => Some((probs, layout)),
            _ => None,
        }
    }

    /// Softmax cross-entropy of a single row of logits against `label`.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.rows() != 1 || label >= lv.cols() {
            return Err(Error::dim("cross_entropy", format!("logits {:?}, label {label}", lv.shape())));
        }
        let mut probs = lv.data().to_vec();
        ops::softmax_in_place(&mut probs);
        let max = lv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(lv.data().iter().map(|v| math::exp(v - max)).sum::<f64>());
        let loss = lse - lv.data()[label];
        self.push(Op::CrossEntropy { logits, label, probs }, Tensor::scalar(loss), "cross_entropy")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(s), "sum")
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(&node.op, id, &g, &mut grads);
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            param_nodes: self.param_nodes.clone(),
        })
    }

    fn propagate(&self, op: &Op, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.value(NodeId(id));
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (inner, cols) = (wv.shape()[0], wv.shape()[1]);
                if let Some(dx) = self.slot(grads, *x) {
                    ops::matmul_grad_input(g, wv.data(), dx, inner, cols);
                }
                if let Some(dw) = self.slot(grads, *w) {
                    ops::matmul_grad_weight(xv.data(), g, dw, inner, cols);
                }
                if let Some(b) = b {
                    if let Some(db) = self.slot(grads, *b) {
                        for row in g.chunks_exact(cols) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for n in [a, b] {
                    if let Some(d) = self.slot(grads, *n) {
                        axpy(d, g, 1.0);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(da) = self.slot(grads, *a) {
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(d) = self.slot(grads, *x) {
                    axpy(d, g, *c);
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let gv = self.value(*gamma).data();
                let dim = gv.len();
                if let Some(dg) = self.slot(grads, *gamma) {
                    for (gr, hr) in g.chunks_exact(dim).zip(xhat.chunks_exact(dim)) {
                        for ((d, gi), hi) in dg.iter_mut().zip(gr).zip(hr) {
                            *d += gi * hi;
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for gr in g.chunks_exact(dim) {
                        axpy(db, gr, 1.0);
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    let inv_d = 1.0 / dim as f64;
                    let mut dh = vec![0.0; dim];
                    for (r, ((gr, hr), dxr)) in g.chunks_exact(dim).zip(xhat.chunks_exact(dim)).zip(dx.chunks_exact_mut(dim)).enumerate() {
                        for j in 0..dim {
                            dh[j] = gr[j] * gv[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() * inv_d;
                        let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() * inv_d;
                        for j in 0..dim {
                            dxr[j] += inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Activation { x, kind } => {
                let xv = self.value(*x).data();
                if let Some(d) = self.slot(grads, *x) {
                    for ((di, gi), xi) in d.iter_mut().zip(g).zip(xv) {
                        *di += gi * kind.derivative(*xi);
                    }
                }
            }
            Op::Softmax { x } => {
                let c = out.cols();
                if let Some(d) = self.slot(grads, *x) {
                    for ((dr, gr), yr) in d.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(out.data().chunks_exact(c)) {
                        let s: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            dr[j] += yr[j] * (gr[j] - s);
                        }
                    }
                }
            }
            Op::Mask { x, mask } => {
                if let Some(d) = self.slot(grads, *x) {
                    for ((di, gi), m) in d.iter_mut().zip(g).zip(mask) {
                        *di += gi * m;
                    }
                }
            }
            Op::Gather { x, index } => {
                let c = out.cols();
                if let Some(d) = self.slot(grads, *x) {
                    for (r, ix) in index.iter().enumerate() {
                        if let Some(src) = ix {
                            axpy(&mut d[src * c..(src + 1) * c], &g[r * c..(r + 1) * c], 1.0);
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = out.cols();
                if let Some(d) = self.slot(grads, *x) {
                    axpy(&mut d[start * c..start * c + g.len()], g, 1.0);
                }
            }
            Op::Transpose { x } => {
                let (r, c) = (out.rows(), out.cols());
                if let Some(d) = self.slot(grads, *x) {
                    for i in 0..r {
                        for j in 0..c {
                            d[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            Op::MeanRows { x } => {
                let xv = self.value(*x);
                let inv = 1.0 / xv.rows() as f64;
                if let Some(d) = self.slot(grads, *x) {
                    for row in d.chunks_exact_mut(xv.cols()) {
                        axpy(row, g, inv);
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if let Some(d) = self.slot(grads, *a) {
                    for (dr, gr) in d.chunks_exact_mut(ca).zip(g.chunks_exact(ca + cb)) {
                        axpy(dr, &gr[..ca], 1.0);
                    }
                }
                if let Some(d) = self.slot(grads, *b) {
                    for (dr, gr) in d.chunks_exact_mut(cb).zip(g.chunks_exact(ca + cb)) {
                        axpy(dr, &gr[ca..], 1.0);
                    }
                }
            }
            Op::Attention { q, k, v, bias, layout, probs } => {
                let d = out.cols();
                let want = |n: NodeId| self.nodes[n.0].requires_grad;
                let mut dq = want(*q).then(|| vec![0.0; self.value(*q).numel()]);
                let mut dk = want(*k).then(|| vec![0.0; self.value(*k).numel()]);
                let mut dv = want(*v).then(|| vec![0.0; self.value(*v).numel()]);
                let mut db = bias.filter(|b| want(*b)).map(|b| vec![0.0; self.value(b).numel()]);
                attention_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    g,
                    layout,
                    d,
                    AttentionGrads {
                        dq: dq.as_deref_mut(),
                        dk: dk.as_deref_mut(),
                        dv: dv.as_deref_mut(),
                        dbias: db.as_deref_mut(),
                    },
                );
                for (n, buf) in [(Some(*q), dq), (Some(*k), dk), (Some(*v), dv), (*bias, db)] {
                    if let (Some(n), Some(buf)) = (n, buf) {
                        if let Some(slot) = self.slot(grads, n) {
                            axpy(slot, &buf, 1.0);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, label, probs } => {
                if let Some(d) = self.slot(grads, *logits) {
                    for (j, (di, p)) in d.iter_mut().zip(probs).enumerate() {
                        let target = if j == *label { 1.0 } else { 0.0 };
                        *di += g[0] * (p - target);
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(d) = self.slot(grads, *x) {
                    d.iter_mut().for_each(|v| *v += g[0]);
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: NodeId) -> Option<&'g mut [f64]> {
        if !self.nodes[id.0].requires_grad {
            return None;
        }
        let len = self.value(id).numel();
        Some(grads[id.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl Gradients {
    /// Gradient of a leaf or parameter node; `None` when it does not
    /// require grad or was not reached.
    pub fn wrt(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient of parameter `index`, `None` if it never entered the tape.
    pub fn param(&self, index: usize) -> Option<&[f64]> {
        self.param_nodes.get(index).copied().flatten().and_then(|id| self.wrt(id))
    }

    pub fn param_count(&self) -> usize {
        self.param_nodes.len()
    }
}
