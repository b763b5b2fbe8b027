//! Building blocks expressed directly on a [`Graph`].

use msprl_tensor::{Activation, Element, Graph, TensorError, Var};

use crate::error::Result;

/// Weight (`out×in×k×k`) and bias (`out`) of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

/// Stride-1 "same" convolution with zero padding `k / 2`.
pub fn conv<E: Element>(g: &mut Graph<E>, c: ConvVars, x: Var) -> Result<Var> {
    let k = g.shape(c.weight)[2];
    Ok(g.conv2d(x, c.weight, Some(c.bias), 1, k / 2)?)
}

/// `x + conv(act(conv(x)))`, no normalization.
pub fn residual_block<E: Element>(g: &mut Graph<E>, c1: ConvVars, c2: ConvVars, act: Activation, x: Var) -> Result<Var> {
    let h = conv(g, c1, x)?;
    let h = g.activation(h, act)?;
    let h = conv(g, c2, h)?;
    Ok(g.add(x, h)?)
}

/// Pixel-unshuffle by 2 (C → 4C channels) then a 1×1 conv to 2C.
pub fn downsample<E: Element>(g: &mut Graph<E>, c: ConvVars, x: Var) -> Result<Var> {
    let s = g.pixel_unshuffle(x, 2)?;
    conv(g, c, s)
}

/// 1×1 conv C → 2C then pixel-shuffle by 2 (2C → C/2 channels).
pub fn upsample<E: Element>(g: &mut Graph<E>, c: ConvVars, x: Var) -> Result<Var> {
    let h = conv(g, c, x)?;
    Ok(g.pixel_shuffle(h, 2)?)
}

/// Shallow feature extraction.
///
/// `att = stack(x_resized) ⊙ enc_down` where `stack` is
/// 3×3 conv → act → 1×1 conv → act → 1×1 conv, then
/// `out = conv1×1(concat(x_resized, att)) + enc_down`.
pub fn sfe<E: Element>(
    g: &mut Graph<E>,
    stack: &[ConvVars; 3],
    fuse: ConvVars,
    act: Activation,
    x_resized: Var,
    enc_down: Var,
) -> Result<Var> {
    let (xs, es) = (g.shape(x_resized), g.shape(enc_down));
    if xs.len() != 4 || es.len() != 4 || xs[0] != es[0] || xs[2..] != es[2..] {
        return Err(TensorError::ShapeMismatch {
            op: "sfe",
            lhs: xs.to_vec(),
            rhs: es.to_vec(),
        }
        .into());
    }
    let mut h = conv(g, stack[0], x_resized)?;
    h = g.activation(h, act)?;
    h = conv(g, stack[1], h)?;
    h = g.activation(h, act)?;
    h = conv(g, stack[2], h)?;
    let att = g.mul(h, enc_down)?;
    let cat = g.concat_channels(x_resized, att)?;
    let fused = conv(g, fuse, cat)?;
    Ok(g.add(fused, enc_down)?)
}

/// `conv1×1(concat(ebk, upper_up))`, reducing 2C' → C'.
pub fn feature_fusion<E: Element>(g: &mut Graph<E>, c: ConvVars, ebk: Var, upper_up: Var) -> Result<Var> {
    if g.shape(ebk) != g.shape(upper_up) {
        return Err(TensorError::ShapeMismatch {
            op: "feature_fusion",
            lhs: g.shape(ebk).to_vec(),
            rhs: g.shape(upper_up).to_vec(),
        }
        .into());
    }
    let cat = g.concat_channels(ebk, upper_up)?;
    conv(g, c, cat)
}
