use std::sync::atomic::{AtomicU64, Ordering};

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::activation::Activation;
use crate::ops::conv::{self, ConvGeometry};
use crate::ops::fft;
use crate::ops::resize::ResizePlan;
use crate::ops::shuffle;
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: ConvGeometry,
    },
    Activation {
        input: usize,
        kind: Activation,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    Concat {
        a: usize,
        b: usize,
    },
    PixelUnshuffle {
        input: usize,
        factor: usize,
    },
    PixelShuffle {
        input: usize,
        factor: usize,
    },
    Resize {
        input: usize,
        plan: ResizePlan,
    },
    FftReal(usize),
    FftImag(usize),
    PadTo {
        input: usize,
    },
}

#[derive(Debug)]
struct Node<E: Element> {
    value: Tensor<E>,
    op: Op,
    needs_grad: bool,
}

/// Tape of recorded operations, appended in execution order.
///
/// Inputs of every node precede it, so reverse index order is a valid
/// topological order for the backward sweep.
#[derive(Debug)]
pub struct Graph<E: Element = f32> {
    id: u64,
    nodes: Vec<Node<E>>,
    backpropagated: bool,
}

impl<E: Element> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate<E: Element>(grads: &mut [Option<Vec<E>>], index: usize, g: Vec<E>) {
    match &mut grads[index] {
        slot @ None => *slot = Some(g),
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
    }
}

impl<E: Element> Graph<E> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.index)
    }

    fn node(&self, v: Var) -> Result<&Node<E>> {
        Ok(&self.nodes[self.index(v)?])
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<E>, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        })
    }

    /// Records an input. Its `requires_grad` flag decides whether backward
    /// fills in a gradient for it.
    pub fn leaf(&mut self, tensor: Tensor<E>) -> Result<Var> {
        let needs_grad = tensor.requires_grad();
        self.push("leaf", tensor, Op::Leaf, needs_grad)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<E>) -> Result<Var> {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.node(v).expect("variable from another graph").value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Gradient of a leaf after [`backward`](Self::backward).
    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.node(v).ok()?.value.grad()
    }

    /// Removes a leaf's gradient, leaving `None` in its place.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<E>> {
        let i = self.index(v).ok()?;
        self.nodes[i].value.take_grad()
    }

    /// Clears leaf gradients so backward may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        self.backpropagated = false;
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (xi, wi) = (self.index(input)?, self.index(weight)?);
        let bi = bias.map(|b| self.index(b)).transpose()?;
        let geom = ConvGeometry::new(
            self.nodes[xi].value.shape(),
            self.nodes[wi].value.shape(),
            bi.map(|b| self.nodes[b].value.shape()),
            stride,
            padding,
        )?;
        let out = conv::conv2d_forward(
            &geom,
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            bi.map(|b| self.nodes[b].value.data()),
        );
        let needs = self.needs(xi) || self.needs(wi) || bi.is_some_and(|b| self.needs(b));
        let value = Tensor::from_vec(geom.output_shape(), out)?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input: xi,
                weight: wi,
                bias: bi,
                geom,
            },
            needs,
        )
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let value = Tensor::from_vec(x.shape().to_vec(), x.data().iter().map(|&v| kind.apply(v)).collect())?;
        let needs = self.needs(xi);
        self.push(kind.name(), value, Op::Activation { input: xi, kind }, needs)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(E, E) -> E, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.shape() != bv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_vec(av.shape().to_vec(), data)?;
        let needs = self.needs(ai) || self.needs(bi);
        self.push(name, value, op(ai, bi), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let f = E::from_f64(factor);
        let value = Tensor::from_vec(x.shape().to_vec(), x.data().iter().map(|&v| v * f).collect())?;
        let needs = self.needs(xi);
        self.push("scale", value, Op::Scale(xi, factor), needs)
    }

    pub fn abs(&mut self, input: Var) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let value = Tensor::from_vec(x.shape().to_vec(), x.data().iter().map(|v| v.abs()).collect())?;
        let needs = self.needs(xi);
        self.push("abs", value, Op::Abs(xi), needs)
    }

    fn total(data: &[E]) -> f64 {
        // sequential double-precision accumulation: order is fixed
        data.iter().map(|v| v.to_f64()).sum()
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let xi = self.index(input)?;
        let s = Self::total(self.nodes[xi].value.data());
        let needs = self.needs(xi);
        self.push("sum", Tensor::scalar(E::from_f64(s)), Op::Sum(xi), needs)
    }

    /// Mean of all elements as a scalar.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let xi = self.index(input)?;
        let x = self.nodes[xi].value.data();
        if x.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "mean",
                msg: "mean of an empty tensor".into(),
            });
        }
        let m = Self::total(x) / x.len() as f64;
        let needs = self.needs(xi);
        self.push("mean", Tensor::scalar(E::from_f64(m)), Op::Mean(xi), needs)
    }

    /// Concatenates along the channel axis: `a` first, then `b`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let (n, c1, h, w) = av.dims4("concat_channels")?;
        let (n2, c2, h2, w2) = bv.dims4("concat_channels")?;
        if (n, h, w) != (n2, h2, w2) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (c1 + c2) * plane);
        for i in 0..n {
            data.extend_from_slice(&av.data()[i * c1 * plane..(i + 1) * c1 * plane]);
            data.extend_from_slice(&bv.data()[i * c2 * plane..(i + 1) * c2 * plane]);
        }
        let value = Tensor::from_vec(vec![n, c1 + c2, h, w], data)?;
        let needs = self.needs(ai) || self.needs(bi);
        self.push("concat_channels", value, Op::Concat { a: ai, b: bi }, needs)
    }

    pub fn pixel_unshuffle(&mut self, input: Var, factor: usize) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let shape = shuffle::unshuffle_shape(x.shape(), factor)?;
        let value = Tensor::from_vec(shape, shuffle::pixel_unshuffle(x.data(), x.shape(), factor))?;
        let needs = self.needs(xi);
        self.push("pixel_unshuffle", value, Op::PixelUnshuffle { input: xi, factor }, needs)
    }

    pub fn pixel_shuffle(&mut self, input: Var, factor: usize) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let shape = shuffle::shuffle_shape(x.shape(), factor)?;
        let value = Tensor::from_vec(shape, shuffle::pixel_shuffle(x.data(), x.shape(), factor))?;
        let needs = self.needs(xi);
        self.push("pixel_shuffle", value, Op::PixelShuffle { input: xi, factor }, needs)
    }

    pub fn bilinear_resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let (n, c, h, w) = x.dims4("bilinear_resize")?;
        if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
            return Err(TensorError::InvalidArgument {
                op: "bilinear_resize",
                msg: format!("cannot resize {h}x{w} to {out_h}x{out_w}"),
            });
        }
        let plan = ResizePlan::new([n, c, h, w], out_h, out_w);
        let value = Tensor::from_vec(plan.out_shape(), plan.forward(x.data()))?;
        let needs = self.needs(xi);
        self.push("bilinear_resize", value, Op::Resize { input: xi, plan }, needs)
    }

    /// Per-plane unnormalized 2-D DFT; returns `(real, imaginary)`.
    pub fn fft2d(&mut self, input: Var) -> Result<(Var, Var)> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let (_, _, h, w) = x.dims4("fft2d")?;
        let shape = x.shape().to_vec();
        let (re, im) = fft::fft2d_real(x.data(), h, w);
        let needs = self.needs(xi);
        let re = self.push("fft2d", Tensor::from_vec(shape.clone(), re)?, Op::FftReal(xi), needs)?;
        let im = self.push("fft2d", Tensor::from_vec(shape, im)?, Op::FftImag(xi), needs)?;
        Ok((re, im))
    }

    /// Zero-pads the bottom and right edges up to `out_h × out_w`.
    pub fn zero_pad(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let xi = self.index(input)?;
        let x = &self.nodes[xi].value;
        let (n, c, h, w) = x.dims4("zero_pad")?;
        if out_h < h || out_w < w {
            return Err(TensorError::InvalidArgument {
                op: "zero_pad",
                msg: format!("target {out_h}x{out_w} smaller than {h}x{w}"),
            });
        }
        let mut data = vec![E::ZERO; n * c * out_h * out_w];
        for (p, src) in x.data().chunks(h * w).enumerate() {
            for y in 0..h {
                let dst = p * out_h * out_w + y * out_w;
                data[dst..dst + w].copy_from_slice(&src[y * w..(y + 1) * w]);
            }
        }
        let value = Tensor::from_vec(vec![n, c, out_h, out_w], data)?;
        let needs = self.needs(xi);
        self.push("zero_pad", value, Op::PadTo { input: xi }, needs)
    }

    /// Reverse sweep from a scalar loss. Fills the gradient of every leaf
    /// that requires one (zeros if the loss does not reach it).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.index(loss)?;
        if self.backpropagated {
            return Err(TensorError::AlreadyBackpropagated);
        }
        let loss_value = &self.nodes[li].value;
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if !self.nodes[li].needs_grad {
            return Err(TensorError::Detached);
        }

        let mut grads: Vec<Option<Vec<E>>> = vec![None; li + 1];
        grads[li] = Some(vec![E::ONE]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backward_node(i, g, &mut grads)?;
        }
        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.needs_grad && node.value.grad().is_none() {
                let zeros = vec![E::ZERO; node.value.len()];
                node.value.set_grad(zeros)?;
            }
        }
        self.backpropagated = true;
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: Vec<E>, grads: &mut [Option<Vec<E>>]) -> Result<()> {
        let op = self.nodes[i].op.clone();
        let nodes = &self.nodes;
        let val = |j: usize| nodes[j].value.data();
        let needs = |j: usize| nodes[j].needs_grad;
        match op {
            Op::Leaf => {
                self.nodes[i].value.set_grad(g)?;
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let r = conv::conv2d_backward(
                    &geom,
                    val(input),
                    val(weight),
                    &g,
                    needs(input),
                    needs(weight),
                    bias.is_some_and(needs),
                );
                if let Some(dx) = r.input {
                    accumulate(grads, input, dx);
                }
                if let Some(dw) = r.weight {
                    accumulate(grads, weight, dw);
                }
                if let (Some(b), Some(db)) = (bias, r.bias) {
                    accumulate(grads, b, db);
                }
            }
            Op::Activation { input, kind } => {
                let dx = val(input)
                    .iter()
                    .zip(&g)
                    .map(|(&x, &gy)| gy * kind.derivative(x))
                    .collect();
                accumulate(grads, input, dx);
            }
            Op::Add(a, b) => {
                if needs(a) && needs(b) {
                    accumulate(grads, a, g.clone());
                    accumulate(grads, b, g);
                } else if needs(a) {
                    accumulate(grads, a, g);
                } else {
                    accumulate(grads, b, g);
                }
            }
            Op::Sub(a, b) => {
                if needs(b) {
                    accumulate(grads, b, g.iter().map(|&v| -v).collect());
                }
                if needs(a) {
                    accumulate(grads, a, g);
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let da = g.iter().zip(val(b)).map(|(&gy, &y)| gy * y).collect();
                    accumulate(grads, a, da);
                }
                if needs(b) {
                    let db = g.iter().zip(val(a)).map(|(&gy, &x)| gy * x).collect();
                    accumulate(grads, b, db);
                }
            }
            Op::Scale(input, factor) => {
                let f = E::from_f64(factor);
                accumulate(grads, input, g.iter().map(|&v| v * f).collect());
            }
            Op::Abs(input) => {
                let dx = val(input)
                    .iter()
                    .zip(&g)
                    .map(|(&x, &gy)| {
                        if x > E::ZERO {
                            gy
                        } else if x < E::ZERO {
                            -gy
                        } else {
                            E::ZERO
                        }
                    })
                    .collect();
                accumulate(grads, input, dx);
            }
            Op::Sum(input) => {
                accumulate(grads, input, vec![g[0]; val(input).len()]);
            }
            Op::Mean(input) => {
                let n = val(input).len();
                let gv = E::from_f64(g[0].to_f64() / n as f64);
                accumulate(grads, input, vec![gv; n]);
            }
            Op::Concat { a, b } => {
                let av = &nodes[a].value;
                let (n, c1, h, w) = av.dims4("concat_channels")?;
                let c2 = nodes[b].value.shape()[1];
                let plane = h * w;
                let (mut ga, mut gb) = (Vec::new(), Vec::new());
                for chunk in g.chunks((c1 + c2) * plane).take(n) {
                    ga.extend_from_slice(&chunk[..c1 * plane]);
                    gb.extend_from_slice(&chunk[c1 * plane..]);
                }
                if needs(a) {
                    accumulate(grads, a, ga);
                }
                if needs(b) {
                    accumulate(grads, b, gb);
                }
            }
            Op::PixelUnshuffle { input, factor } => {
                let shape = self.nodes[i].value.shape();
                accumulate(grads, input, shuffle::pixel_shuffle(&g, shape, factor));
            }
            Op::PixelShuffle { input, factor } => {
                let shape = self.nodes[i].value.shape();
                accumulate(grads, input, shuffle::pixel_unshuffle(&g, shape, factor));
            }
            Op::Resize { input, plan } => {
                accumulate(grads, input, plan.backward(&g));
            }
            Op::FftReal(input) | Op::FftImag(input) => {
                // Re(X) = C x and Im(X) = -S x with C, S symmetric, so the
                // adjoints are Re(FFT(g)) and Im(FFT(g)).
                let [_, _, h, w] = self.nodes[i].value.shape()[..] else {
                    unreachable!("fft2d output is rank 4")
                };
                let (re, im) = fft::fft2d_real(&g, h, w);
                let dx = if matches!(op, Op::FftReal(_)) { re } else { im };
                accumulate(grads, input, dx);
            }
            Op::PadTo { input } => {
                let (_, _, h, w) = nodes[input].value.dims4("zero_pad")?;
                let [_, _, ph, pw] = self.nodes[i].value.shape()[..] else {
                    unreachable!("zero_pad output is rank 4")
                };
                let mut dx = Vec::with_capacity(nodes[input].value.len());
                for plane in g.chunks(ph * pw) {
                    for y in 0..h {
                        dx.extend_from_slice(&plane[y * pw..y * pw + w]);
                    }
                }
                accumulate(grads, input, dx);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g
            .leaf(Tensor::from_fn([2, 3], |i| i as f64).with_requires_grad(true))
            .unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let mut g = Graph::<f64>::new();
        let data = vec![1.5, -2.0, 0.25];
        let x = g
            .leaf(Tensor::from_vec([3], data.clone()).unwrap().with_requires_grad(true))
            .unwrap();
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let loss = g.scale(s, 0.5).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &data[..]);
    }

    #[test]
    fn backward_twice_requires_reset() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones([2]).with_requires_grad(true)).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.backward(s), Err(TensorError::AlreadyBackpropagated));
        g.zero_grad();
        g.backward(s).unwrap();
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones([2]).with_requires_grad(true)).unwrap();
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
        let c = g.constant(Tensor::ones([2])).unwrap();
        let s = g.sum(c).unwrap();
        assert_eq!(g.backward(s), Err(TensorError::Detached));
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones([2]).with_requires_grad(true)).unwrap();
        let y = g.leaf(Tensor::ones([3]).with_requires_grad(true)).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(y).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut a = Graph::<f64>::new();
        let mut b = Graph::<f64>::new();
        let x = a.leaf(Tensor::ones([1])).unwrap();
        assert_eq!(b.sum(x), Err(TensorError::ForeignVar));
    }

    #[test]
    fn shared_input_accumulates() {
        // d/dx sum(x + x) = 2
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::ones([3]).with_requires_grad(true)).unwrap();
        let y = g.add(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0; 3]);
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::full([2], 3e38f32)).unwrap();
        assert_eq!(g.add(x, x), Err(TensorError::NonFinite { op: "add" }));
    }
}
