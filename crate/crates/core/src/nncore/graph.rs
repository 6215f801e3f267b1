//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in creation order. `backward` walks
//! that list in exact reverse, so gradients (including the summation order
//! of parameters used more than once) are deterministic.
//!
//! Tensors are treated as `rows × cols` matrices where `cols` is the last
//! axis and `rows` the product of all leading axes.

use std::sync::Arc;

use super::kernels::{self, gemm, gemm_nt, gemm_tn};
use super::optim::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{FadeError, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<F> {
    Leaf,
    MatMul(NodeId, NodeId),
    Bmm(NodeId, NodeId),
    Conv1d {
        x: NodeId,
        kernel: NodeId,
        bias: NodeId,
        cols: Vec<F>,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Gelu(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, NodeId),
    ScaleConst(NodeId, F),
    AddRow(NodeId, NodeId),
    Embedding {
        table: NodeId,
        idx: Vec<u8>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    RollAppend(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<u8>,
        probs: Vec<F>,
    },
    Sum(NodeId),
}

struct Node<F> {
    value: Arc<Tensor<F>>,
    op: Op<F>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Gradients of the non-parameter leaves created with [`Graph::variable`].
pub struct Gradients<F> {
    leaves: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.leaves.get(id.0).and_then(|g| g.as_ref())
    }
}

pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(msg: String) -> FadeError {
    FadeError::Dimension(msg)
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool, what: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(FadeError::NonFinite(what));
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            param: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<F>) -> NodeId {
        self.nodes.push(Node {
            value: Arc::new(value),
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor<F>) -> NodeId {
        self.nodes.push(Node {
            value: Arc::new(value),
            op: Op::Leaf,
            requires_grad: true,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf bound to a stored parameter. The value is shared, not copied.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: store.get(id).shared(),
            op: Op::Leaf,
            requires_grad: true,
            param: Some(id),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 || av.cols() != bv.shape()[0] {
            return Err(dim_err(format!("matmul {:?} · {:?}", av.shape(), bv.shape())));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.shape()[1]);
        let mut out = vec![F::zero(); m * n];
        gemm(av.data(), bv.data(), &mut out, m, k, n);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(&shape, out)?, Op::MatMul(a, b), rg, "matmul")
    }

    /// Batched product: slice `s` of `a` (one row of width `d`) times the
    /// `d×e` matrix `w[s]`.
    pub fn bmm(&mut self, a: NodeId, w: NodeId) -> Result<NodeId> {
        let (av, wv) = (self.value(a), self.value(w));
        let ws = wv.shape();
        if ws.len() != 3 || ws[0] != av.rows() || ws[1] != av.cols() {
            return Err(dim_err(format!("bmm {:?} with {:?}", av.shape(), ws)));
        }
        let (batch, d, e) = (ws[0], ws[1], ws[2]);
        let mut out = vec![F::zero(); batch * e];
        for s in 0..batch {
            gemm(
                &av.data()[s * d..(s + 1) * d],
                &wv.data()[s * d * e..(s + 1) * d * e],
                &mut out[s * e..(s + 1) * e],
                1,
                d,
                e,
            );
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = e;
        let rg = self.rg(a) || self.rg(w);
        self.push(Tensor::new(&shape, out)?, Op::Bmm(a, w), rg, "bmm")
    }

    /// Same-padded 1-D cross-correlation over the time axis of `x[B×T×C]`
    /// with `kernel[k×C×O]` and `bias[O]`. The reduction for each output runs
    /// over kernel tap then input channel, both ascending.
    pub fn conv1d(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, kv, bv) = (self.value(x), self.value(kernel), self.value(bias));
        let (xs, ks) = (xv.shape(), kv.shape());
        if xs.len() != 3 || ks.len() != 3 || ks[1] != xs[2] || bv.len() != ks[2] {
            return Err(dim_err(format!("conv1d x {:?} kernel {:?} bias {:?}", xs, ks, bv.shape())));
        }
        let width = ks[0];
        if width % 2 == 0 {
            return Err(FadeError::Config(format!("conv kernel width {width} must be odd")));
        }
        let (batch, steps, cin, cout) = (xs[0], xs[1], xs[2], ks[2]);
        let cols = im2col(xv.data(), batch, steps, cin, width);
        let rows = batch * steps;
        let mut out = vec![F::zero(); rows * cout];
        gemm(&cols, kv.data(), &mut out, rows, width * cin, cout);
        for row in out.chunks_exact_mut(cout) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let rg = self.rg(x) || self.rg(kernel) || self.rg(bias);
        self.push(
            Tensor::new(&[batch, steps, cout], out)?,
            Op::Conv1d { x, kernel, bias, cols },
            rg,
            "conv1d",
        )
    }

    /// Normalises over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let d = xv.cols();
        if d == 0 || gv.len() != d || bv.len() != d {
            return Err(dim_err(format!("layer_norm {:?} gain {:?}", xv.shape(), gv.shape())));
        }
        let inv_d = F::one() / F::of(d as f64);
        let eps = F::of(LAYER_NORM_EPS);
        let rows = xv.rows();
        let mut xhat = vec![F::zero(); rows * d];
        let mut rstd = vec![F::zero(); rows];
        let mut out = vec![F::zero(); rows * d];
        for r in 0..rows {
            let src = xv.row(r);
            let mean = src.iter().fold(F::zero(), |s, &v| s + v) * inv_d;
            let var = src.iter().fold(F::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
            let rs = F::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (src[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let shape = xv.shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            Tensor::new(&shape, out)?,
            Op::LayerNorm { x, gain, bias, xhat, rstd },
            rg,
            "layer_norm",
        )
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(F) -> F, op: Op<F>, what: &'static str) -> Result<NodeId> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(x);
        self.push(t, op, rg, what)
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, kernels::gelu, Op::Gelu(x), "gelu")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x), "sigmoid")
    }

    pub fn scale_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let c = F::of(c);
        self.unary(x, |v| v * c, Op::ScaleConst(x, c), "scale")
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(F, F) -> F, op: Op<F>, what: &'static str) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(dim_err(format!("{what} {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(t, op, rg, what)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    /// Multiplies every element of `x` by the one-element tensor `s`.
    pub fn scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(dim_err(format!("scale factor must be a scalar, got {:?}", sv.shape())));
        }
        let c = sv.item();
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * c).collect();
        let t = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(x) || self.rg(s);
        self.push(t, Op::Scale(x, s), rg, "scale")
    }

    /// Adds `bias[cols]` to every row.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(dim_err(format!("add_row {:?} + {:?}", xv.shape(), bv.shape())));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(bv.len()) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let t = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        self.push(t, Op::AddRow(x, bias), rg, "add_row")
    }

    /// Row lookup: `out[..., :] = table[idx[...], :]`; `lead` gives the
    /// leading shape of the index array.
    pub fn embedding(&mut self, table: NodeId, idx: &[u8], lead: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        let ts = tv.shape();
        if ts.len() != 2 || lead.iter().product::<usize>() != idx.len() {
            return Err(dim_err(format!("embedding table {:?} idx {}", ts, idx.len())));
        }
        let d = ts[1];
        let mut data = Vec::with_capacity(idx.len() * d);
        for &s in idx {
            if s as usize >= ts[0] {
                return Err(dim_err(format!("symbol {s} outside table of {} rows", ts[0])));
            }
            data.extend_from_slice(tv.row(s as usize));
        }
        let mut shape = lead.to_vec();
        shape.push(d);
        let rg = self.rg(table);
        self.push(
            Tensor::new(&shape, data)?,
            Op::Embedding { table, idx: idx.to_vec() },
            rg,
            "embedding",
        )
    }

    /// Columns `start..start+len` of every row.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let c = xv.cols();
        if start + len > c {
            return Err(dim_err(format!("slice {start}..{} of width {c}", start + len)));
        }
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(x);
        self.push(Tensor::new(&shape, data)?, Op::SliceCols { x, start }, rg, "slice")
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = (*self.nodes[x.0].value).clone().reshape(shape)?;
        let rg = self.rg(x);
        self.push(t, Op::Reshape(x), rg, "reshape")
    }

    /// Shift register update: each row of `prev` drops its first `w`
    /// entries and appends the corresponding row of `g` (width `w`). `prev`
    /// is treated as a constant.
    pub fn roll_append(&mut self, prev: &Tensor<F>, g: NodeId) -> Result<NodeId> {
        let gv = self.value(g);
        let (w, c) = (gv.cols(), prev.cols());
        if prev.rows() != gv.rows() || w > c {
            return Err(dim_err(format!("roll {:?} with {:?}", prev.shape(), gv.shape())));
        }
        let mut data = Vec::with_capacity(prev.len());
        for r in 0..prev.rows() {
            data.extend_from_slice(&prev.row(r)[w..]);
            data.extend_from_slice(gv.row(r));
        }
        let rg = self.rg(g);
        self.push(Tensor::new(prev.shape(), data)?, Op::RollAppend(g), rg, "roll")
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, in nats.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u8]) -> Result<NodeId> {
        let (probs, lse) = kernels::softmax_lse_rows(self.value(logits).data(), self.value(logits).cols());
        self.cross_entropy_with(logits, targets, probs, &lse)
    }

    /// [`Graph::cross_entropy`] with the softmax and log-sum-exp of `logits`
    /// already computed by [`kernels::softmax_lse_rows`].
    pub fn cross_entropy_with(&mut self, logits: NodeId, targets: &[u8], probs: Vec<F>, lse: &[F]) -> Result<NodeId> {
        let lv = self.value(logits);
        let c = lv.cols();
        if lv.rows() != targets.len() || lse.len() != targets.len() || probs.len() != lv.len() {
            return Err(dim_err(format!("{} targets for {} rows", targets.len(), lv.rows())));
        }
        let mut total = F::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t as usize >= c {
                return Err(dim_err(format!("target {t} outside {c} classes")));
            }
            total = total + (lse[r] - lv.row(r)[t as usize]);
        }
        let loss = total / F::of(targets.len().max(1) as f64);
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().fold(F::zero(), |a, &b| a + b);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    /// Propagates d`loss` back through the tape. Parameter gradients are
    /// added into `store`; gradients of [`Graph::variable`] leaves are
    /// returned.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<F>) -> Result<Gradients<F>> {
        if self.value(loss).len() != 1 {
            return Err(FadeError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut acc = |id: NodeId, contrib: Vec<F>| {
                if !self.nodes[id.0].requires_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(existing) => {
                        for (e, c) in existing.iter_mut().zip(contrib) {
                            *e = *e + c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {
                    if let Some(pid) = node.param {
                        store.accumulate_grad(pid, &g);
                    } else {
                        leaves[i] = Some(Tensor::new(node.value.shape(), g)?);
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.shape()[1]);
                    if self.rg(*a) {
                        acc(*a, gemm_nt(&g, bv.data(), m, n, k));
                    }
                    if self.rg(*b) {
                        acc(*b, gemm_tn(av.data(), &g, m, k, n));
                    }
                }
                Op::Bmm(a, w) => {
                    let (av, wv) = (self.value(*a), self.value(*w));
                    let ws = wv.shape();
                    let (batch, d, e) = (ws[0], ws[1], ws[2]);
                    if self.rg(*a) {
                        let mut da = Vec::with_capacity(batch * d);
                        for s in 0..batch {
                            da.extend(gemm_nt(&g[s * e..(s + 1) * e], &wv.data()[s * d * e..(s + 1) * d * e], 1, e, d));
                        }
                        acc(*a, da);
                    }
                    if self.rg(*w) {
                        let mut dw = Vec::with_capacity(batch * d * e);
                        for s in 0..batch {
                            let arow = &av.data()[s * d..(s + 1) * d];
                            let grow = &g[s * e..(s + 1) * e];
                            for &x in arow {
                                dw.extend(grow.iter().map(|&gv| x * gv));
                            }
                        }
                        acc(*w, dw);
                    }
                }
                Op::Conv1d { x, kernel, bias, cols } => {
                    let xs = self.value(*x).shape();
                    let kv = self.value(*kernel);
                    let (batch, steps, cin) = (xs[0], xs[1], xs[2]);
                    let (width, cout) = (kv.shape()[0], kv.shape()[2]);
                    let rows = batch * steps;
                    if self.rg(*bias) {
                        acc(*bias, column_sums(&g, cout));
                    }
                    if self.rg(*kernel) {
                        acc(*kernel, gemm_tn(cols, &g, rows, width * cin, cout));
                    }
                    if self.rg(*x) {
                        let dcols = gemm_nt(&g, kv.data(), rows, cout, width * cin);
                        acc(*x, col2im(&dcols, batch, steps, cin, width));
                    }
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let gv = self.value(*gain).data();
                    let d = gv.len();
                    let rows = rstd.len();
                    if self.rg(*bias) {
                        acc(*bias, column_sums(&g, d));
                    }
                    if self.rg(*gain) {
                        let mut dg = vec![F::zero(); d];
                        for r in 0..rows {
                            for j in 0..d {
                                dg[j] = dg[j] + g[r * d + j] * xhat[r * d + j];
                            }
                        }
                        acc(*gain, dg);
                    }
                    if self.rg(*x) {
                        let df = F::of(d as f64);
                        let mut dx = vec![F::zero(); rows * d];
                        for r in 0..rows {
                            let mut s1 = F::zero();
                            let mut s2 = F::zero();
                            for j in 0..d {
                                let dh = g[r * d + j] * gv[j];
                                s1 = s1 + dh;
                                s2 = s2 + dh * xhat[r * d + j];
                            }
                            let scale = rstd[r] / df;
                            for j in 0..d {
                                let dh = g[r * d + j] * gv[j];
                                dx[r * d + j] = scale * (df * dh - s1 - xhat[r * d + j] * s2);
                            }
                        }
                        acc(*x, dx);
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x).data();
                    acc(*x, g.iter().zip(xv).map(|(&gi, &xi)| gi * kernels::gelu_grad(xi)).collect());
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.data();
                    acc(*x, g.iter().zip(yv).map(|(&gi, &y)| gi * y * (F::one() - y)).collect());
                }
                Op::ScaleConst(x, c) => {
                    acc(*x, g.iter().map(|&gi| gi * *c).collect());
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.iter().map(|&v| -v).collect());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    acc(*a, g.iter().zip(bv).map(|(&gi, &y)| gi * y).collect());
                    acc(*b, g.iter().zip(av).map(|(&gi, &x)| gi * x).collect());
                }
                Op::Scale(x, s) => {
                    let xv = self.value(*x).data();
                    let c = self.value(*s).item();
                    if self.rg(*s) {
                        let ds = g.iter().zip(xv).fold(F::zero(), |a, (&gi, &xi)| a + gi * xi);
                        acc(*s, vec![ds]);
                    }
                    acc(*x, g.iter().map(|&gi| gi * c).collect());
                }
                Op::AddRow(x, bias) => {
                    let c = self.value(*bias).len();
                    if self.rg(*bias) {
                        acc(*bias, column_sums(&g, c));
                    }
                    acc(*x, g);
                }
                Op::Embedding { table, idx } => {
                    let tv = self.value(*table);
                    let d = tv.shape()[1];
                    let mut dt = vec![F::zero(); tv.len()];
                    for (p, &s) in idx.iter().enumerate() {
                        let dst = &mut dt[s as usize * d..(s as usize + 1) * d];
                        for (o, &v) in dst.iter_mut().zip(&g[p * d..(p + 1) * d]) {
                            *o = *o + v;
                        }
                    }
                    acc(*table, dt);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let (rows, c) = (xv.rows(), xv.cols());
                    let w = node.value.cols();
                    let mut dx = vec![F::zero(); rows * c];
                    for r in 0..rows {
                        dx[r * c + start..r * c + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    acc(*x, dx);
                }
                Op::Reshape(x) => acc(*x, g),
                Op::RollAppend(src) => {
                    let w = self.value(*src).cols();
                    let c = node.value.cols();
                    let mut dg = Vec::with_capacity(node.value.rows() * w);
                    for r in 0..node.value.rows() {
                        dg.extend_from_slice(&g[r * c + c - w..(r + 1) * c]);
                    }
                    acc(*src, dg);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let c = self.value(*logits).cols();
                    let scale = g[0] / F::of(targets.len().max(1) as f64);
                    let mut dl: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        let e = &mut dl[r * c + t as usize];
                        *e = *e - scale;
                    }
                    acc(*logits, dl);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(*x, vec![g[0]; n]);
                }
            }
        }
        Ok(Gradients { leaves })
    }
}

fn column_sums<F: Scalar>(g: &[F], cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); cols];
    for row in g.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
    out
}

/// Rows `(b, t)` of width `width·cin`: tap `j` holds `x[b, t + j − width/2]`
/// or zeros outside the sequence.
fn im2col<F: Scalar>(x: &[F], batch: usize, steps: usize, cin: usize, width: usize) -> Vec<F> {
    let half = width / 2;
    let rowlen = width * cin;
    let mut cols = vec![F::zero(); batch * steps * rowlen];
    for b in 0..batch {
        for t in 0..steps {
            let dst = &mut cols[(b * steps + t) * rowlen..(b * steps + t + 1) * rowlen];
            for j in 0..width {
                let src_t = t as isize + j as isize - half as isize;
                if src_t < 0 || src_t >= steps as isize {
                    continue;
                }
                let s = (b * steps + src_t as usize) * cin;
                dst[j * cin..(j + 1) * cin].copy_from_slice(&x[s..s + cin]);
            }
        }
    }
    cols
}

fn col2im<F: Scalar>(dcols: &[F], batch: usize, steps: usize, cin: usize, width: usize) -> Vec<F> {
    let half = width / 2;
    let rowlen = width * cin;
    let mut dx = vec![F::zero(); batch * steps * cin];
    for b in 0..batch {
        for t in 0..steps {
            let src = &dcols[(b * steps + t) * rowlen..(b * steps + t + 1) * rowlen];
            for j in 0..width {
                let dst_t = t as isize + j as isize - half as isize;
                if dst_t < 0 || dst_t >= steps as isize {
                    continue;
                }
                let d = (b * steps + dst_t as usize) * cin;
                for c in 0..cin {
                    dx[d + c] = dx[d + c] + src[j * cin + c];
                }
            }
        }
    }
    dx
}
