//! Space-to-depth rearrangements. Output channel of `pixel_unshuffle` is
//! `c·r² + dy·r + dx` for source offset `(dy, dx)` inside each `r×r` cell.

use crate::element::Element;
use crate::error::{Result, TensorError};

pub fn unshuffle_shape(shape: &[usize], r: usize) -> Result<Vec<usize>> {
    let [n, c, h, w] = shape[..] else {
        return Err(TensorError::Rank {
            op: "pixel_unshuffle",
            expected: 4,
            shape: shape.to_vec(),
        });
    };
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_unshuffle",
            msg: format!("{h}x{w} not divisible by factor {r}"),
        });
    }
    Ok(vec![n, c * r * r, h / r, w / r])
}

pub fn shuffle_shape(shape: &[usize], r: usize) -> Result<Vec<usize>> {
    let [n, c, h, w] = shape[..] else {
        return Err(TensorError::Rank {
            op: "pixel_shuffle",
            expected: 4,
            shape: shape.to_vec(),
        });
    };
    if r == 0 || c % (r * r) != 0 {
        return Err(TensorError::InvalidArgument {
            op: "pixel_shuffle",
            msg: format!("{c} channels not divisible by factor {r}²"),
        });
    }
    Ok(vec![n, c / (r * r), h * r, w * r])
}

/// Walks every (fine, coarse) index pair. `fine` indexes the N×C×H×W tensor,
/// `coarse` the N×C·r²×(H/r)×(W/r) tensor.
fn for_each_pair(fine_shape: &[usize], r: usize, mut f: impl FnMut(usize, usize)) {
    let [n, c, h, w] = fine_shape[..] else {
        unreachable!("validated rank")
    };
    let (ch, cw) = (h / r, w / r);
    for b in 0..n {
        for ci in 0..c {
            for y in 0..h {
                let (cy, dy) = (y / r, y % r);
                for x in 0..w {
                    let (cx, dx) = (x / r, x % r);
                    let oc = ci * r * r + dy * r + dx;
                    let coarse = ((b * c * r * r + oc) * ch + cy) * cw + cx;
                    let fine = ((b * c + ci) * h + y) * w + x;
                    f(fine, coarse);
                }
            }
        }
    }
}

pub fn pixel_unshuffle<E: Element>(input: &[E], shape: &[usize], r: usize) -> Vec<E> {
    let mut out = vec![E::ZERO; input.len()];
    for_each_pair(shape, r, |fine, coarse| out[coarse] = input[fine]);
    out
}

/// `shape` is the shape of the (coarse) input.
pub fn pixel_shuffle<E: Element>(input: &[E], shape: &[usize], r: usize) -> Vec<E> {
    let [n, c, h, w] = shape[..] else {
        unreachable!("validated rank")
    };
    let fine_shape = [n, c / (r * r), h * r, w * r];
    let mut out = vec![E::ZERO; input.len()];
    for_each_pair(&fine_shape, r, |fine, coarse| out[fine] = input[coarse]);
    out
}
