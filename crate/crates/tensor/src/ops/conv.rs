//! 2-D convolution lowered to im2col + GEMM, one image at a time.

use rayon::prelude::*;

use crate::element::Element;
use crate::error::{Result, TensorError};

/// Resolved extents of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        bias: Option<&[usize]>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let [n, c, h, w] = input[..] else {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: input.to_vec(),
            });
        };
        let [oc, ic, kh, kw] = weight[..] else {
            return Err(TensorError::Rank {
                op: "conv2d",
                expected: 4,
                shape: weight.to_vec(),
            });
        };
        if ic != c {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: weight.to_vec(),
            });
        }
        if kh != kw || kh == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                msg: format!("kernel must be square and non-empty, got {kh}x{kw}"),
            });
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        if let Some(b) = bias {
            if b != [oc] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![oc],
                    rhs: b.to_vec(),
                });
            }
        }
        let extent = |len: usize| -> Result<usize> {
            let padded = len + 2 * padding;
            if padded < kh {
                return Err(TensorError::InvalidArgument {
                    op: "conv2d",
                    msg: format!("non-positive output extent for input {len}, kernel {kh}"),
                });
            }
            Ok((padded - kh) / stride + 1)
        };
        Ok(Self {
            batch: n,
            in_channels: c,
            height: h,
            width: w,
            out_channels: oc,
            kernel: kh,
            stride,
            padding,
            out_height: extent(h)?,
            out_width: extent(w)?,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_height, self.out_width]
    }

    fn in_plane(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn out_plane(&self) -> usize {
        self.out_channels * self.out_height * self.out_width
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Pointwise convolutions read the image directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Source coordinate for output position `o` and kernel tap `k`, if in bounds.
    #[inline]
    fn source(&self, o: usize, k: usize, len: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
    }

    fn im2col<E: Element>(&self, image: &[E], col: &mut [E]) {
        let (k, pixels) = (self.kernel, self.out_pixels());
        for c in 0..self.in_channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * pixels..(row + 1) * pixels];
                    for oy in 0..self.out_height {
                        let line = &mut dst[oy * self.out_width..(oy + 1) * self.out_width];
                        match self.source(oy, ky, self.height) {
                            None => line.iter_mut().for_each(|v| *v = E::ZERO),
                            Some(iy) => {
                                let src = &plane[iy * self.width..(iy + 1) * self.width];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kx, self.width) {
                                        Some(ix) => src[ix],
                                        None => E::ZERO,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<E: Element>(&self, col: &[E], image: &mut [E]) {
        let (k, pixels) = (self.kernel, self.out_pixels());
        image.iter_mut().for_each(|v| *v = E::ZERO);
        for c in 0..self.in_channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * pixels..(row + 1) * pixels];
                    for oy in 0..self.out_height {
                        let Some(iy) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        let line = &src[oy * self.out_width..(oy + 1) * self.out_width];
                        let dst = &mut plane[iy * self.width..(iy + 1) * self.width];
                        for (ox, v) in line.iter().enumerate() {
                            if let Some(ix) = self.source(ox, kx, self.width) {
                                dst[ix] += *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<E: Element>(
    g: &ConvGeometry,
    input: &[E],
    weight: &[E],
    bias: Option<&[E]>,
) -> Vec<E> {
    let mut out = vec![E::ZERO; g.batch * g.out_plane()];
    let pixels = g.out_pixels();
    out.par_chunks_mut(g.out_plane().max(1))
        .zip(input.par_chunks(g.in_plane().max(1)))
        .for_each(|(out_n, in_n)| {
            if g.is_pointwise() {
                E::gemm(g.out_channels, g.patch_len(), pixels, weight, false, in_n, false, out_n, false);
            } else {
                let mut col = vec![E::ZERO; g.patch_len() * pixels];
                g.im2col(in_n, &mut col);
                E::gemm(g.out_channels, g.patch_len(), pixels, weight, false, &col, false, out_n, false);
            }
            if let Some(b) = bias {
                for (oc, chunk) in out_n.chunks_mut(pixels.max(1)).enumerate() {
                    let bv = b[oc];
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
            }
        });
    out
}

/// Gradients of a convolution; each requested output is `Some`.
pub struct ConvGrads<E> {
    pub input: Option<Vec<E>>,
    pub weight: Option<Vec<E>>,
    pub bias: Option<Vec<E>>,
}

pub fn conv2d_backward<E: Element>(
    g: &ConvGeometry,
    input: &[E],
    weight: &[E],
    grad_out: &[E],
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> ConvGrads<E> {
    let pixels = g.out_pixels();
    let patch = g.patch_len();
    let wlen = g.out_channels * patch;

    // Per-image partials are reduced afterwards in image order so the result
    // does not depend on how the work was scheduled.
    let partials: Vec<(Option<Vec<E>>, Option<Vec<E>>)> = (0..g.batch)
        .into_par_iter()
        .map(|n| {
            let in_n = &input[n * g.in_plane()..(n + 1) * g.in_plane()];
            let go_n = &grad_out[n * g.out_plane()..(n + 1) * g.out_plane()];
            let mut col_buf = Vec::new();
            let col: &[E] = if g.is_pointwise() {
                in_n
            } else {
                if need_weight {
                    col_buf = vec![E::ZERO; patch * pixels];
                    g.im2col(in_n, &mut col_buf);
                }
                &col_buf
            };
            let dw = need_weight.then(|| {
                let mut dw = vec![E::ZERO; wlen];
                E::gemm(g.out_channels, pixels, patch, go_n, false, col, true, &mut dw, false);
                dw
            });
            let dx = need_input.then(|| {
                let mut dx = vec![E::ZERO; g.in_plane()];
                if g.is_pointwise() {
                    E::gemm(patch, g.out_channels, pixels, weight, true, go_n, false, &mut dx, false);
                } else {
                    let mut dcol = vec![E::ZERO; patch * pixels];
                    E::gemm(patch, g.out_channels, pixels, weight, true, go_n, false, &mut dcol, false);
                    g.col2im(&dcol, &mut dx);
                }
                dx
            });
            (dx, dw)
        })
        .collect();

    let mut grad_input = need_input.then(|| Vec::with_capacity(g.batch * g.in_plane()));
    let mut grad_weight = need_weight.then(|| vec![E::ZERO; wlen]);
    for (dx, dw) in partials {
        if let (Some(acc), Some(dx)) = (grad_input.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
        if let (Some(acc), Some(dw)) = (grad_weight.as_mut(), dw) {
            acc.iter_mut().zip(&dw).for_each(|(a, b)| *a += *b);
        }
    }
    let grad_bias = need_bias.then(|| {
        let mut db = vec![0.0f64; g.out_channels];
        for go_n in grad_out.chunks(g.out_plane().max(1)) {
            for (oc, chunk) in go_n.chunks(pixels.max(1)).enumerate() {
                db[oc] += chunk.iter().map(|v| v.to_f64()).sum::<f64>();
            }
        }
        db.into_iter().map(E::from_f64).collect()
    });
    ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    }
}
