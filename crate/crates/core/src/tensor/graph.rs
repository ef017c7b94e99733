//! Reverse-mode tape. A [`Graph`] records every forward op; `backward`
//! walks the tape once in reverse and the whole graph is dropped after
//! gradients are pulled out.

use super::kernels;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, stride: usize, padding: usize },
    Relu { input: Var },
    Add { a: Var, b: Var },
    Scale { input: Var, factor: f64 },
    PixelShuffle { input: Var, r: usize },
    Linear { input: Var, weight: Var, bias: Var },
    L1Loss { pred: Var, target: Var },
    Dot { a: Var, b: Var },
    ConcatChannels { a: Var, b: Var },
    TileSpatial { input: Var, h: usize, w: usize },
    Reshape { input: Var },
}

struct Node<E> {
    value: Tensor<E>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<E: Scalar> {
    nodes: Vec<Node<E>>,
}

impl<E: Scalar> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Graph<E> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<E>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Zero-padded 2D convolution, NCHW x (Cout,Cin,k,k).
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv2d_forward(
            self.value(input),
            self.value(weight),
            self.value(bias),
            stride,
            padding,
        )?;
        let ng = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(out, Op::Conv2d { input, weight, bias, stride, padding }, ng))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = Tensor {
            shape: self.value(input).shape().to_vec(),
            data: self.value(input).data().iter().map(|&v| v.maximum(E::ZERO)).collect(),
        };
        let ng = self.needs(input);
        self.push(out, Op::Relu { input }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let out = Tensor {
            shape: self.value(a).shape().to_vec(),
            data: self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x + y)
                .collect(),
        };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, ng))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let f = E::from_f64(factor);
        let out = Tensor {
            shape: self.value(input).shape().to_vec(),
            data: self.value(input).data().iter().map(|&v| v * f).collect(),
        };
        let ng = self.needs(input);
        self.push(out, Op::Scale { input, factor }, ng)
    }

    pub fn pixel_shuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let out = kernels::pixel_shuffle_raw(self.value(input), r)?;
        let ng = self.needs(input);
        Ok(self.push(out, Op::PixelShuffle { input, r }, ng))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = kernels::linear_forward(self.value(input), self.value(weight), self.value(bias))?;
        let ng = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(out, Op::Linear { input, weight, bias }, ng))
    }

    /// Mean absolute difference over all elements; subgradient 0 at ties.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.value(pred).shape() != self.value(target).shape() {
            return Err(Error::shape(
                "l1_loss",
                format!("{:?} vs {:?}", self.value(pred).shape(), self.value(target).shape()),
            ));
        }
        let n = self.value(pred).len();
        let mut acc = 0.0f64;
        for (&p, &t) in self.value(pred).data().iter().zip(self.value(target).data()) {
            acc += (p - t).abs().to_f64();
        }
        let out = Tensor::scalar(E::from_f64(acc / n as f64));
        let ng = self.needs(pred) || self.needs(target);
        Ok(self.push(out, Op::L1Loss { pred, target }, ng))
    }

    /// Scalar inner product of two same-shape tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "dot",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut acc = E::ZERO;
        for (&x, &y) in self.value(a).data().iter().zip(self.value(b).data()) {
            acc += x * y;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(acc), Op::Dot { a, b }, ng))
    }

    /// Concatenates along the channel axis of two NCHW tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [na, ca, ha, wa] = self.value(a).dims4();
        let [nb, cb, hb, wb] = self.value(b).dims4();
        if na != nb || ha != hb || wa != wb {
            return Err(Error::shape(
                "concat_channels",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = Tensor::zeros(&[na, ca + cb, ha, wa]);
        let plane = ha * wa;
        for s in 0..na {
            let dst = &mut out.data_mut()[s * (ca + cb) * plane..(s + 1) * (ca + cb) * plane];
            dst[..ca * plane]
                .copy_from_slice(&self.value(a).data()[s * ca * plane..(s + 1) * ca * plane]);
            dst[ca * plane..]
                .copy_from_slice(&self.value(b).data()[s * cb * plane..(s + 1) * cb * plane]);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::ConcatChannels { a, b }, ng))
    }

    /// Broadcasts an (N, C) vector to (N, C, h, w); backward sums the
    /// spatial gradient back into the vector.
    pub fn tile_spatial(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let (n, c) = self.value(input).dims2()?;
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for s in 0..n {
            for ch in 0..c {
                let v = self.value(input).data()[s * c + ch];
                out.data_mut()[((s * c + ch) * h * w)..((s * c + ch + 1) * h * w)].fill(v);
            }
        }
        let ng = self.needs(input);
        Ok(self.push(out, Op::TileSpatial { input, h, w }, ng))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(input).reshape(shape)?;
        let ng = self.needs(input);
        Ok(self.push(out, Op::Reshape { input }, ng))
    }

    /// Errors if the node holds any NaN/Inf; run on forward outputs and
    /// losses so a poisoned pass is caught at the pass boundary.
    pub fn assert_finite(&self, v: Var, op: &'static str) -> Result<()> {
        if self.value(v).all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Reverse sweep from a scalar loss. Returns one gradient slot per
    /// node; pull out the leaves you care about, then drop the graph.
    pub fn backward(&self, loss: Var) -> Result<Gradients<E>> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(E::ONE));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Tensor<E>>], v: Var, delta: Tensor<E>) {
        match &mut grads[v.0] {
            Some(existing) => {
                for (dst, src) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *dst += *src;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<E>, grads: &mut [Option<Tensor<E>>]) -> Result<()> {
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, stride, padding } => {
                let d = kernels::conv2d_backward(
                    self.value(input),
                    self.value(weight),
                    self.value(bias),
                    stride,
                    padding,
                    g,
                )?;
                if self.needs(input) {
                    Self::accumulate(grads, input, d.input);
                }
                if self.needs(weight) {
                    Self::accumulate(grads, weight, d.weight);
                }
                if self.needs(bias) {
                    Self::accumulate(grads, bias, d.bias);
                }
            }
            Op::Relu { input } => {
                if self.needs(input) {
                    let mut d = Tensor::zeros(self.value(input).shape());
                    for ((dst, &x), &gv) in
                        d.data_mut().iter_mut().zip(self.value(input).data()).zip(g.data())
                    {
                        if x > E::ZERO {
                            *dst = gv;
                        }
                    }
                    Self::accumulate(grads, input, d);
                }
            }
            Op::Add { a, b } => {
                if self.needs(a) {
                    Self::accumulate(grads, a, g.clone());
                }
                if self.needs(b) {
                    Self::accumulate(grads, b, g.clone());
                }
            }
            Op::Scale { input, factor } => {
                if self.needs(input) {
                    let f = E::from_f64(factor);
                    let d = Tensor {
                        shape: g.shape().to_vec(),
                        data: g.data().iter().map(|&v| v * f).collect(),
                    };
                    Self::accumulate(grads, input, d);
                }
            }
            Op::PixelShuffle { input, r } => {
                if self.needs(input) {
                    Self::accumulate(grads, input, kernels::pixel_unshuffle_raw(g, r)?);
                }
            }
            Op::Linear { input, weight, bias } => {
                let (di, dw, db) = kernels::linear_backward(self.value(input), self.value(weight), g)?;
                if self.needs(input) {
                    Self::accumulate(grads, input, di);
                }
                if self.needs(weight) {
                    Self::accumulate(grads, weight, dw);
                }
                if self.needs(bias) {
                    Self::accumulate(grads, bias, db);
                }
            }
            Op::L1Loss { pred, target } => {
                let scale = g.data()[0] * E::from_f64(1.0 / self.value(pred).len() as f64);
                let sign_into = |flip: bool| {
                    let mut d = Tensor::zeros(self.value(pred).shape());
                    for ((dst, &p), &t) in d
                        .data_mut()
                        .iter_mut()
                        .zip(self.value(pred).data())
                        .zip(self.value(target).data())
                    {
                        let s = if p > t {
                            E::ONE
                        } else if p < t {
                            -E::ONE
                        } else {
                            E::ZERO
                        };
                        *dst = if flip { -s * scale } else { s * scale };
                    }
                    d
                };
                if self.needs(pred) {
                    Self::accumulate(grads, pred, sign_into(false));
                }
                if self.needs(target) {
                    Self::accumulate(grads, target, sign_into(true));
                }
            }
            Op::Dot { a, b } => {
                let gv = g.data()[0];
                let scaled = |src: &Tensor<E>| Tensor {
                    shape: src.shape().to_vec(),
                    data: src.data().iter().map(|&v| v * gv).collect(),
                };
                if self.needs(a) {
                    Self::accumulate(grads, a, scaled(self.value(b)));
                }
                if self.needs(b) {
                    Self::accumulate(grads, b, scaled(self.value(a)));
                }
            }
            Op::ConcatChannels { a, b } => {
                let [n, ca, h, w] = self.value(a).dims4();
                let cb = self.value(b).dims4()[1];
                let plane = h * w;
                if self.needs(a) {
                    let mut da = Tensor::zeros(self.value(a).shape());
                    for s in 0..n {
                        da.data_mut()[s * ca * plane..(s + 1) * ca * plane].copy_from_slice(
                            &g.data()[s * (ca + cb) * plane..s * (ca + cb) * plane + ca * plane],
                        );
                    }
                    Self::accumulate(grads, a, da);
                }
                if self.needs(b) {
                    let mut db = Tensor::zeros(self.value(b).shape());
                    for s in 0..n {
                        db.data_mut()[s * cb * plane..(s + 1) * cb * plane].copy_from_slice(
                            &g.data()[s * (ca + cb) * plane + ca * plane..(s + 1) * (ca + cb) * plane],
                        );
                    }
                    Self::accumulate(grads, b, db);
                }
            }
            Op::TileSpatial { input, h, w } => {
                if self.needs(input) {
                    let (n, c) = self.value(input).dims2()?;
                    let mut d = Tensor::zeros(&[n, c]);
                    for s in 0..n {
                        for ch in 0..c {
                            let mut acc = E::ZERO;
                            for &gv in &g.data()[(s * c + ch) * h * w..(s * c + ch + 1) * h * w] {
                                acc += gv;
                            }
                            d.data_mut()[s * c + ch] = acc;
                        }
                    }
                    Self::accumulate(grads, input, d);
                }
            }
            Op::Reshape { input } => {
                if self.needs(input) {
                    Self::accumulate(grads, input, g.reshape(self.value(input).shape())?);
                }
            }
        }
        Ok(())
    }
}

pub struct Gradients<E> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Scalar> Gradients<E> {
    pub fn get(&self, v: Var) -> Option<&Tensor<E>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Moves the gradient for `v` out, if present.
    pub fn take(&mut self, v: Var) -> Option<Tensor<E>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.all_finite())
    }
}
