//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records every operation of one forward pass as a node on a tape.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for the
//! parameters that were read through [`Graph::param`]. Graphs are cheap and
//! short-lived: one per sentence per step.

use crate::loss;
use crate::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    /// Matrix plus a `1 × c` row broadcast over every row.
    AddRow(Var, Var),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Scale(Var, T),
    /// Elementwise product with a constant (dropout masks).
    Mask(Var, Tensor<T>),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Tensor<T>, rstd: Vec<T> },
    GatherRows { src: Var, idx: Vec<usize> },
    SliceCols { src: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    RepeatRows(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor<T> },
    InfoNce { anchor: Var, candidates: Var, grad_anchor: Tensor<T>, grad_candidates: Tensor<T> },
}

struct Node<T> {
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor<T>>,
    op: Op<T>,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    degenerate_cosines: usize,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self { params, nodes: Vec::with_capacity(256), degenerate_cosines: 0 }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Zero-norm cosine fallbacks encountered by InfoNCE nodes on this graph.
    pub fn degenerate_cosines(&self) -> usize {
        self.degenerate_cosines
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data()[0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a 1 × c bias");
        let mut out = self.value(a).clone();
        assert_eq!(out.cols(), r.cols(), "add_row width mismatch");
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_nt(self.value(b));
        self.push(out, Op::MatMulNt(a, b))
    }

    /// `a · W + b` for a `rows × in` input, `in × out` weight and `1 × out` bias.
    pub fn affine(&mut self, a: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(a, w);
        self.add_row(h, b)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn mask(&mut self, a: Var, mask: Tensor<T>) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), mask.shape(), "mask shape mismatch");
        for (o, &m) in out.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        self.push(out, Op::Mask(a, mask))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v = gelu(*v);
        }
        self.push(out, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&loss::softmax(x.row(r)));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization with learned gain and bias (`1 × c` each).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        let eps = T::from_f64_lossy(LAYER_NORM_EPS);
        let cf = T::from_usize_lossy(c);
        let mut xhat = Tensor::zeros(n, c);
        let mut rstd = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
            let s = T::one() / (var + eps).sqrt();
            for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            rstd.push(s);
        }
        let g = self.value(gain);
        let b = self.value(bias);
        let mut out = xhat.clone();
        for r in 0..n {
            for ((o, &gv), &bv) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    pub fn gather_rows(&mut self, src: Var, idx: Vec<usize>) -> Var {
        let s = self.value(src);
        let mut out = Tensor::zeros(idx.len(), s.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(s.row(i));
        }
        self.push(out, Op::GatherRows { src, idx })
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let s = self.value(src);
        assert!(start + len <= s.cols(), "column slice out of range");
        let mut out = Tensor::zeros(s.rows(), len);
        for r in 0..s.rows() {
            out.row_mut(r).copy_from_slice(&s.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { src, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Column-wise mean producing a `1 × c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).mean_rows();
        self.push(out, Op::MeanRows(a))
    }

    /// Tiles a `1 × c` row into `n × c`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.rows(), 1, "repeat_rows expects a single row");
        let mut data = Vec::with_capacity(n * v.cols());
        for _ in 0..n {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::from_vec(n, v.cols(), data);
        self.push(out, Op::RepeatRows(a))
    }

    /// Sum over rows of the cross-entropy between `softmax(logits[r])` and `targets[r]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows(), targets.len(), "one target per logit row");
        let mut probs = Tensor::zeros(l.rows(), l.cols());
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            assert!(t < l.cols(), "target index out of range");
            total += loss::cross_entropy(l.row(r), t);
            probs.row_mut(r).copy_from_slice(&loss::softmax(l.row(r)));
        }
        self.push(Tensor::filled(1, 1, total), Op::SoftmaxCrossEntropy { logits, targets, probs })
    }

    /// Cosine InfoNCE of a `1 × d` anchor against `r × d` candidates whose first row is the positive.
    pub fn info_nce(&mut self, anchor: Var, candidates: Var, tau: T) -> Var {
        let a = self.value(anchor);
        let c = self.value(candidates);
        assert_eq!(a.rows(), 1, "InfoNCE anchor must be a single row");
        assert_eq!(a.cols(), c.cols(), "InfoNCE width mismatch");
        let rows: Vec<&[T]> = (0..c.rows()).map(|r| c.row(r)).collect();
        let terms = loss::info_nce(a.data(), &rows, tau);
        let grad_anchor = Tensor::row_vector(terms.grad_anchor);
        let grad_candidates = Tensor::from_rows(&terms.grad_candidates);
        self.degenerate_cosines += terms.degenerate;
        self.push(
            Tensor::filled(1, 1, terms.loss),
            Op::InfoNce { anchor, candidates, grad_anchor, grad_candidates },
        )
    }

    /// Gradients of the `1 × 1` node `root` with respect to every parameter read on this graph.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let root_shape = self.value(root).shape();
        assert_eq!(root_shape, (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Tensor::filled(1, 1, T::one()));
        let mut out = Gradients::zeros_like(self.params);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate_owned(*id, g),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let db = column_sums(&g);
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *row, db);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_tn(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, s) => {
                    let mut d = g;
                    d.scale_assign(*s);
                    accumulate(&mut grads, *a, d);
                }
                Op::Mask(a, m) => {
                    let mut d = g;
                    for (o, &mv) in d.data_mut().iter_mut().zip(m.data()) {
                        *o *= mv;
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut d = g;
                    for (o, &xv) in d.data_mut().iter_mut().zip(x.data()) {
                        *o *= gelu_grad(xv);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.as_ref().expect("softmax value");
                    let mut d = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: T = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        for ((o, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let gv = self.value(*gain);
                    let (n, c) = xhat.shape();
                    let cf = T::from_usize_lossy(c);
                    let mut dgain = Tensor::zeros(1, c);
                    let dbias = column_sums(&g);
                    let mut dx = Tensor::zeros(n, c);
                    for r in 0..n {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let mut mean_dxhat = T::zero();
                        let mut mean_dxhat_xhat = T::zero();
                        for j in 0..c {
                            let dxh = gr[j] * gv.data()[j];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xr[j];
                            dgain.data_mut()[j] += gr[j] * xr[j];
                        }
                        mean_dxhat /= cf;
                        mean_dxhat_xhat /= cf;
                        let row = dx.row_mut(r);
                        for j in 0..c {
                            let dxh = gr[j] * gv.data()[j];
                            row[j] = rstd[r] * (dxh - mean_dxhat - xr[j] * mean_dxhat_xhat);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                }
                Op::GatherRows { src, idx } => {
                    let s = self.value(*src);
                    let mut d = Tensor::zeros(s.rows(), s.cols());
                    for (r, &j) in idx.iter().enumerate() {
                        for (o, &gv) in d.row_mut(j).iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                    accumulate(&mut grads, *src, d);
                }
                Op::SliceCols { src, start } => {
                    let s = self.value(*src);
                    let mut d = Tensor::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *src, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut d = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    let cols = g.cols();
                    for &p in parts {
                        let h = self.value(p).rows();
                        let d = Tensor::from_vec(h, cols, g.data()[off * cols..(off + h) * cols].to_vec());
                        off += h;
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).rows();
                    let inv = T::one() / T::from_usize_lossy(n);
                    let mut data = Vec::with_capacity(n * g.cols());
                    for _ in 0..n {
                        data.extend(g.data().iter().map(|&v| v * inv));
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(n, g.cols(), data));
                }
                Op::RepeatRows(a) => {
                    accumulate(&mut grads, *a, column_sums(&g));
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let upstream = g.data()[0];
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[t] -= T::one();
                        for v in row.iter_mut() {
                            *v *= upstream;
                        }
                    }
                    accumulate(&mut grads, *logits, d);
                }
                Op::InfoNce { anchor, candidates, grad_anchor, grad_candidates } => {
                    let upstream = g.data()[0];
                    let mut da = grad_anchor.clone();
                    da.scale_assign(upstream);
                    let mut dc = grad_candidates.clone();
                    dc.scale_assign(upstream);
                    accumulate(&mut grads, *anchor, da);
                    accumulate(&mut grads, *candidates, dc);
                }
            }
        }
        out
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, &v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

const GELU_COEFF: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let k = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64_lossy(GELU_COEFF);
    let half = T::from_f64_lossy(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::from_f64_lossy((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64_lossy(GELU_COEFF);
    let half = T::from_f64_lossy(0.5);
    let three = T::from_f64_lossy(3.0);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three * c * x * x)
}
