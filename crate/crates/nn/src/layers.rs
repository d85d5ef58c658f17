//! Parameterised layers over `Graph`. Each checks its input shape and
//! registers its tensors in a `ParamSet` under `{name}.{w,b,...}`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, NnError};
use crate::graph::{conv_out, Graph, NodeId};
use crate::params::{ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor};

/// Uniform in `+-1/sqrt(fan_in)`.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| T::from_f64c(rng.random_range(-bound..=bound))).collect(),
    )
}

/// Square orthogonal matrix via Gram-Schmidt on a Gaussian draw, row-major.
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= dot * m[j * n + k];
                }
            }
            let norm = (0..n).map(|k| m[i * n + k].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = ps.add(format!("{name}.w"), fan_in_uniform(&[outputs, inputs], inputs, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[outputs]));
        Linear { w, b, inputs, outputs }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId, NnError> {
        if g.shape(x) != [self.inputs] {
            return Err(shape_err("linear input", &[self.inputs], g.shape(x)));
        }
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.linear(w, x, Some(b)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = ps.add(
            format!("{name}.w"),
            fan_in_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng),
        );
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[out_channels]));
        Conv2d {
            w,
            b,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// Output `[O, H', W']` for an `[C, H, W]` input.
    pub fn output_shape(&self, h: usize, w: usize) -> [usize; 3] {
        [
            self.out_channels,
            conv_out(h, self.kernel, self.stride),
            conv_out(w, self.kernel, self.stride),
        ]
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId, NnError> {
        let s = g.shape(x);
        if s.len() != 3 || s[0] != self.in_channels || s[1] < self.kernel || s[2] < self.kernel {
            return Err(shape_err("conv2d input", &[self.in_channels, self.kernel, self.kernel], s));
        }
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.conv2d(x, w, b, self.stride))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deconv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Deconv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel / (stride * stride).max(1);
        let w = ps.add(
            format!("{name}.w"),
            fan_in_uniform(&[in_channels, out_channels, kernel, kernel], fan_in.max(1), rng),
        );
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[out_channels]));
        Deconv2d {
            w,
            b,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn output_shape(&self, h: usize, w: usize) -> [usize; 3] {
        [
            self.out_channels,
            (h - 1) * self.stride + self.kernel,
            (w - 1) * self.stride + self.kernel,
        ]
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId, NnError> {
        let s = g.shape(x);
        if s.len() != 3 || s[0] != self.in_channels || s[1] == 0 || s[2] == 0 {
            return Err(shape_err("deconv2d input", &[self.in_channels, 1, 1], s));
        }
        let (w, b) = (g.param(self.w), g.param(self.b));
        Ok(g.deconv2d(x, w, b, self.stride))
    }
}

/// Recurrent state values, carried between graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }

    pub fn cast<U: Scalar>(&self) -> LstmState<U> {
        LstmState {
            h: self.h.iter().map(|v| U::from_f64c(v.to_f64c())).collect(),
            c: self.c.iter().map(|v| U::from_f64c(v.to_f64c())).collect(),
        }
    }
}

/// Recurrent state as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub h: NodeId,
    pub c: NodeId,
}

/// Gate activations of one step, exposed for inspection.
#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub input: NodeId,
    pub forget: NodeId,
    pub cell: NodeId,
    pub output: NodeId,
}

/// LSTM cell. Gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Input weights fan-in uniform, recurrent weights orthogonal per gate
    /// block, biases zero except forget gate at 1.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let wx = ps.add(format!("{name}.wx"), fan_in_uniform(&[4 * hidden, inputs], inputs, rng));
        let mut wh = Vec::with_capacity(4 * hidden * hidden);
        for _ in 0..4 {
            wh.extend(orthogonal(hidden, rng).into_iter().map(T::from_f64c));
        }
        let wh = ps.add(format!("{name}.wh"), Tensor::new(&[4 * hidden, hidden], wh));
        let mut bias = vec![T::zero(); 4 * hidden];
        bias[hidden..2 * hidden].fill(T::one());
        let b = ps.add(format!("{name}.b"), Tensor::vector(bias));
        Lstm {
            wx,
            wh,
            b,
            inputs,
            hidden,
        }
    }

    pub fn state_nodes<T: Scalar>(&self, g: &mut Graph<'_, T>, s: &LstmState<T>) -> Result<LstmNodes, NnError> {
        if s.h.len() != self.hidden || s.c.len() != self.hidden {
            return Err(shape_err("lstm state", &[self.hidden], &[s.h.len()]));
        }
        Ok(LstmNodes {
            h: g.constant_vec(s.h.clone()),
            c: g.constant_vec(s.c.clone()),
        })
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId, s: LstmNodes) -> Result<LstmNodes, NnError> {
        self.step_with_gates(g, x, s).map(|(n, _)| n)
    }

    pub fn step_with_gates<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: NodeId,
        s: LstmNodes,
    ) -> Result<(LstmNodes, LstmGates), NnError> {
        if g.shape(x) != [self.inputs] {
            return Err(shape_err("lstm input", &[self.inputs], g.shape(x)));
        }
        if g.shape(s.h) != [self.hidden] || g.shape(s.c) != [self.hidden] {
            return Err(shape_err("lstm state", &[self.hidden], g.shape(s.h)));
        }
        let n = self.hidden;
        let (wx, wh, b) = (g.param(self.wx), g.param(self.wh), g.param(self.b));
        let zx = g.linear(wx, x, Some(b));
        let zh = g.linear(wh, s.h, None);
        let z = g.add(zx, zh);
        let zi = g.slice(z, 0, n);
        let zf = g.slice(z, n, n);
        let zg = g.slice(z, 2 * n, n);
        let zo = g.slice(z, 3 * n, n);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cell = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, s.c);
        let write = g.mul(i, cell);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        Ok((
            LstmNodes { h, c },
            LstmGates {
                input: i,
                forget: f,
                cell,
                output: o,
            },
        ))
    }
}
