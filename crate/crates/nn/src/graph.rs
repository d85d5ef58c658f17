//! Tape-based reverse-mode differentiation.
//!
//! A `Graph` borrows the parameters it reads, records every op with its
//! output value, and `backward` walks the tape once in reverse. Ops panic on
//! inconsistent shapes; the layer types check shapes up front and return
//! `NnError::ShapeMismatch` instead.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::params::{Gradients, ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(ParamId),
    Linear { w: NodeId, x: NodeId, b: Option<NodeId> },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    Deconv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Scale(NodeId, T),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Reshape(NodeId),
    Sum(NodeId),
    LogSoftmax(NodeId),
    Pick { x: NodeId, index: usize },
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameter nodes, whose value lives in the borrowed set.
    value: Option<Tensor<T>>,
    requires_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
    checked: bool,
    first_non_finite: Option<(usize, &'static str)>,
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::Linear { .. } => "linear",
        Op::Conv2d { .. } => "conv2d",
        Op::Deconv2d { .. } => "deconv2d",
        Op::Relu(_) => "relu",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Exp(_) => "exp",
        Op::Square(_) => "square",
        Op::Scale(..) => "scale",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddN(_) => "add_n",
        Op::Concat(_) => "concat",
        Op::Slice { .. } => "slice",
        Op::Reshape(_) => "reshape",
        Op::Sum(_) => "sum",
        Op::LogSoftmax(_) => "log_softmax",
        Op::Pick { .. } => "pick",
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    // exp(-v) overflows to inf for very negative v, giving exactly 0
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn conv_out(len: usize, kernel: usize, stride: usize) -> usize {
    (len - kernel) / stride + 1
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            checked: false,
            first_non_finite: None,
        }
    }

    /// In checked mode the first op producing a non-finite value is recorded.
    pub fn set_checked(&mut self, on: bool) {
        self.checked = on;
    }

    /// `Err((node index, op name))` for the first non-finite output seen in checked mode.
    pub fn check_finite(&self) -> Result<(), (usize, &'static str)> {
        match self.first_non_finite {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn data(&self, id: NodeId) -> &[T] {
        self.value(id).data()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        if self.checked && self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some((self.nodes.len(), op_name(&op)));
        }
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn constant_vec(&mut self, data: Vec<T>) -> NodeId {
        self.input(Tensor::vector(data))
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// `W x + b` with `W: [out, in]`, `x: [in]`.
    pub fn linear(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> NodeId {
        let (ws, xs) = (self.shape(w), self.shape(x));
        assert!(ws.len() == 2 && xs.len() == 1 && ws[1] == xs[0], "linear: W {ws:?} x {xs:?}");
        let (rows, cols) = (ws[0], ws[1]);
        let wd = self.data(w);
        let xd = self.data(x);
        let mut out: Vec<T> = match b {
            Some(b) => {
                assert_eq!(self.shape(b), [rows], "linear: bias shape");
                self.data(b).to_vec()
            }
            None => vec![T::zero(); rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * cols..(r + 1) * cols];
            let mut acc = T::zero();
            for (a, c) in row.iter().zip(xd) {
                acc += *a * *c;
            }
            *o += acc;
        }
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        self.push(Op::Linear { w, x, b }, Tensor::vector(out), rg)
    }

    /// Valid convolution. `x: [C, H, W]`, `w: [O, C, K, K]`, `b: [O]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> NodeId {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        assert!(xs.len() == 3 && ws.len() == 4 && ws[1] == xs[0] && ws[2] == ws[3], "conv2d: x {xs:?} w {ws:?}");
        let (c_in, h, wd_) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        assert!(h >= k && wd_ >= k && stride >= 1);
        let (ho, wo) = (conv_out(h, k, stride), conv_out(wd_, k, stride));
        let xv = self.data(x);
        let wv = self.data(w);
        let bv = self.data(b);
        assert_eq!(bv.len(), c_out, "conv2d: bias shape");
        let mut out = vec![T::zero(); c_out * ho * wo];
        for o in 0..c_out {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bv[o];
                    for c in 0..c_in {
                        for ky in 0..k {
                            let xrow = (c * h + oy * stride + ky) * wd_ + ox * stride;
                            let wrow = ((o * c_in + c) * k + ky) * k;
                            for kx in 0..k {
                                acc += wv[wrow + kx] * xv[xrow + kx];
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(Op::Conv2d { x, w, b, stride }, Tensor::new(&[c_out, ho, wo], out), rg)
    }

    /// Transposed convolution. `x: [C, H, W]`, `w: [C, O, K, K]`, output `[O, (H-1)S+K, (W-1)S+K]`.
    pub fn deconv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> NodeId {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        assert!(xs.len() == 3 && ws.len() == 4 && ws[0] == xs[0] && ws[2] == ws[3], "deconv2d: x {xs:?} w {ws:?}");
        let (c_in, h, wd_) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[1], ws[2]);
        let (ho, wo) = ((h - 1) * stride + k, (wd_ - 1) * stride + k);
        let xv = self.data(x);
        let wv = self.data(w);
        let bv = self.data(b);
        assert_eq!(bv.len(), c_out, "deconv2d: bias shape");
        let mut out = vec![T::zero(); c_out * ho * wo];
        for o in 0..c_out {
            out[o * ho * wo..(o + 1) * ho * wo].fill(bv[o]);
        }
        for c in 0..c_in {
            for iy in 0..h {
                for ix in 0..wd_ {
                    let v = xv[(c * h + iy) * wd_ + ix];
                    for o in 0..c_out {
                        for ky in 0..k {
                            let orow = (o * ho + iy * stride + ky) * wo + ix * stride;
                            let wrow = ((c * c_out + o) * k + ky) * k;
                            for kx in 0..k {
                                out[orow + kx] += v * wv[wrow + kx];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(Op::Deconv2d { x, w, b, stride }, Tensor::new(&[c_out, ho, wo], out), rg)
    }

    fn map(&mut self, x: NodeId, op: Op<T>, f: impl Fn(T) -> T) -> NodeId {
        let v = self.value(x);
        let out = Tensor::new(v.shape(), v.data().iter().map(|&a| f(a)).collect());
        let rg = self.rg(x);
        self.push(op, out, rg)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Relu(x), |a| if a > T::zero() { a } else { T::zero() })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Tanh(x), T::tanh)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Exp(x), T::exp)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Square(x), |a| a * a)
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> NodeId {
        self.map(x, Op::Scale(x, s), |a| a * s)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op<T>, f: impl Fn(T, T) -> T) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "{}: shape mismatch", op_name(&op));
        let out = Tensor::new(
            va.shape(),
            va.data().iter().zip(vb.data()).map(|(&p, &q)| f(p, q)).collect(),
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(op, out, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Mul(a, b), |p, q| p * q)
    }

    /// Elementwise sum of same-shaped nodes.
    pub fn add_n(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty(), "add_n of nothing");
        let shape = self.shape(xs[0]).to_vec();
        let mut out = vec![T::zero(); self.value(xs[0]).len()];
        for &x in xs {
            assert_eq!(self.shape(x), shape.as_slice(), "add_n: shape mismatch");
            for (o, &v) in out.iter_mut().zip(self.data(x)) {
                *o += v;
            }
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Op::AddN(xs.to_vec()), Tensor::new(&shape, out), rg)
    }

    /// Concatenation of flattened inputs into a vector.
    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for &x in xs {
            out.extend_from_slice(self.data(x));
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Op::Concat(xs.to_vec()), Tensor::vector(out), rg)
    }

    /// `len` consecutive elements of the flattened input, as a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let out = self.data(x)[start..start + len].to_vec();
        let rg = self.rg(x);
        self.push(Op::Slice { x, start }, Tensor::vector(out), rg)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let out = self.value(x).clone().reshaped(shape);
        let rg = self.rg(x);
        self.push(Op::Reshape(x), out, rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.data(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(Op::Sum(x), Tensor::scalar(s), rg)
    }

    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let d = self.data(x);
        let m = d.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + d.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        let out = d.iter().map(|&v| v - lse).collect();
        let rg = self.rg(x);
        self.push(Op::LogSoftmax(x), Tensor::vector(out), rg)
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = self.data(x)[index];
        let rg = self.rg(x);
        self.push(Op::Pick { x, index }, Tensor::scalar(v), rg)
    }

    /// Hash of the sign pattern of every ReLU input. Equal signatures mean the
    /// graph is on the same linear piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                for &v in self.data(x) {
                    (v > T::zero()).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Gradient of scalar `loss` scaled by `seed`.
    pub fn backward(&self, loss: NodeId, seed: T) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        self.backward_from(loss, &Tensor::new(self.shape(loss), vec![seed]))
    }

    /// Vector-Jacobian product of `out` with `seed`, keyed by parameter.
    pub fn backward_from(&self, out: NodeId, seed: &Tensor<T>) -> Gradients<T> {
        assert_eq!(self.shape(out), seed.shape(), "seed shape");
        let mut result = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.data().to_vec());

        for i in (0..=out.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = self.value(NodeId(i));
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (a, &g) in result.get_mut(*p).data_mut().iter_mut().zip(&gy) {
                        *a += g;
                    }
                }
                Op::Linear { w, x, b } => {
                    let ws = self.shape(*w);
                    let (rows, cols) = (ws[0], ws[1]);
                    let wd = self.data(*w);
                    let xd = self.data(*x);
                    if self.rg(*x) {
                        let gx = self.acc(&mut grads, *x);
                        for r in 0..rows {
                            let g = gy[r];
                            if g == T::zero() {
                                continue;
                            }
                            for (a, &wv) in gx.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                                *a += g * wv;
                            }
                        }
                    }
                    if self.rg(*w) {
                        let gw = self.acc(&mut grads, *w);
                        for r in 0..rows {
                            let g = gy[r];
                            if g == T::zero() {
                                continue;
                            }
                            for (a, &xv) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xd) {
                                *a += g * xv;
                            }
                        }
                    }
                    if let Some(b) = b {
                        if self.rg(*b) {
                            add_into(self.acc(&mut grads, *b), &gy);
                        }
                    }
                }
                Op::Conv2d { x, w, b, stride } => self.conv_backward(&mut grads, &gy, *x, *w, *b, *stride),
                Op::Deconv2d { x, w, b, stride } => self.deconv_backward(&mut grads, &gy, *x, *w, *b, *stride),
                Op::Relu(x) => {
                    let xd = self.data(*x);
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &v) in gx.iter_mut().zip(&gy).zip(xd) {
                        if v > T::zero() {
                            *a += g;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &s) in gx.iter_mut().zip(&gy).zip(y.data()) {
                        *a += g * s * (T::one() - s);
                    }
                }
                Op::Tanh(x) => {
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &t) in gx.iter_mut().zip(&gy).zip(y.data()) {
                        *a += g * (T::one() - t * t);
                    }
                }
                Op::Exp(x) => {
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &e) in gx.iter_mut().zip(&gy).zip(y.data()) {
                        *a += g * e;
                    }
                }
                Op::Square(x) => {
                    let xd = self.data(*x);
                    let two = T::one() + T::one();
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &v) in gx.iter_mut().zip(&gy).zip(xd) {
                        *a += two * g * v;
                    }
                }
                Op::Scale(x, s) => {
                    let gx = self.acc(&mut grads, *x);
                    for (a, &g) in gx.iter_mut().zip(&gy) {
                        *a += g * *s;
                    }
                }
                Op::Add(a, b) => {
                    for x in [*a, *b] {
                        if self.rg(x) {
                            add_into(self.acc(&mut grads, x), &gy);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        add_into(self.acc(&mut grads, *a), &gy);
                    }
                    if self.rg(*b) {
                        for (s, &g) in self.acc(&mut grads, *b).iter_mut().zip(&gy) {
                            *s -= g;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    if self.rg(*a) {
                        for ((s, &g), &v) in self.acc(&mut grads, *a).iter_mut().zip(&gy).zip(bd) {
                            *s += g * v;
                        }
                    }
                    if self.rg(*b) {
                        for ((s, &g), &v) in self.acc(&mut grads, *b).iter_mut().zip(&gy).zip(ad) {
                            *s += g * v;
                        }
                    }
                }
                Op::AddN(xs) => {
                    for &x in xs {
                        if self.rg(x) {
                            add_into(self.acc(&mut grads, x), &gy);
                        }
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let n = self.value(x).len();
                        if self.rg(x) {
                            add_into(self.acc(&mut grads, x), &gy[off..off + n]);
                        }
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let gx = self.acc(&mut grads, *x);
                    add_into(&mut gx[*start..*start + gy.len()], &gy);
                }
                Op::Reshape(x) => add_into(self.acc(&mut grads, *x), &gy),
                Op::Sum(x) => {
                    let g = gy[0];
                    for a in self.acc(&mut grads, *x).iter_mut() {
                        *a += g;
                    }
                }
                Op::LogSoftmax(x) => {
                    let total: T = gy.iter().copied().sum();
                    let gx = self.acc(&mut grads, *x);
                    for ((a, &g), &l) in gx.iter_mut().zip(&gy).zip(y.data()) {
                        *a += g - l.exp() * total;
                    }
                }
                Op::Pick { x, index } => {
                    self.acc(&mut grads, *x)[*index] += gy[0];
                }
            }
        }
        result
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], id: NodeId) -> &'g mut Vec<T> {
        let n = self.value(id).len();
        grads[id.0].get_or_insert_with(|| vec![T::zero(); n])
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(&self, grads: &mut [Option<Vec<T>>], gy: &[T], x: NodeId, w: NodeId, b: NodeId, stride: usize) {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let (c_in, h, wd_) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        let (ho, wo) = (conv_out(h, k, stride), conv_out(wd_, k, stride));
        let xv = self.data(x);
        let wv = self.data(w);
        if self.rg(b) {
            let gb = self.acc(grads, b);
            for o in 0..c_out {
                gb[o] += gy[o * ho * wo..(o + 1) * ho * wo].iter().copied().sum();
            }
        }
        if self.rg(w) {
            let gw = self.acc(grads, w);
            for o in 0..c_out {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let g = gy[(o * ho + oy) * wo + ox];
                        if g == T::zero() {
                            continue;
                        }
                        for c in 0..c_in {
                            for ky in 0..k {
                                let xrow = (c * h + oy * stride + ky) * wd_ + ox * stride;
                                let wrow = ((o * c_in + c) * k + ky) * k;
                                for kx in 0..k {
                                    gw[wrow + kx] += g * xv[xrow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.rg(x) {
            let gx = self.acc(grads, x);
            for o in 0..c_out {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let g = gy[(o * ho + oy) * wo + ox];
                        if g == T::zero() {
                            continue;
                        }
                        for c in 0..c_in {
                            for ky in 0..k {
                                let xrow = (c * h + oy * stride + ky) * wd_ + ox * stride;
                                let wrow = ((o * c_in + c) * k + ky) * k;
                                for kx in 0..k {
                                    gx[xrow + kx] += g * wv[wrow + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn deconv_backward(&self, grads: &mut [Option<Vec<T>>], gy: &[T], x: NodeId, w: NodeId, b: NodeId, stride: usize) {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let (c_in, h, wd_) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[1], ws[2]);
        let (ho, wo) = ((h - 1) * stride + k, (wd_ - 1) * stride + k);
        let xv = self.data(x);
        let wv = self.data(w);
        if self.rg(b) {
            let gb = self.acc(grads, b);
            for o in 0..c_out {
                gb[o] += gy[o * ho * wo..(o + 1) * ho * wo].iter().copied().sum();
            }
        }
        let want_w = self.rg(w);
        let want_x = self.rg(x);
        let mut gw = if want_w { Some(vec![T::zero(); wv.len()]) } else { None };
        let mut gx = if want_x { Some(vec![T::zero(); xv.len()]) } else { None };
        for c in 0..c_in {
            for iy in 0..h {
                for ix in 0..wd_ {
                    let xi = (c * h + iy) * wd_ + ix;
                    let v = xv[xi];
                    let mut sx = T::zero();
                    for o in 0..c_out {
                        for ky in 0..k {
                            let orow = (o * ho + iy * stride + ky) * wo + ix * stride;
                            let wrow = ((c * c_out + o) * k + ky) * k;
                            for kx in 0..k {
                                let g = gy[orow + kx];
                                if let Some(gw) = gw.as_mut() {
                                    gw[wrow + kx] += v * g;
                                }
                                sx += g * wv[wrow + kx];
                            }
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        gx[xi] += sx;
                    }
                }
            }
        }
        if let Some(gw) = gw {
            add_into(self.acc(grads, w), &gw);
        }
        if let Some(gx) = gx {
            add_into(self.acc(grads, x), &gx);
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}
