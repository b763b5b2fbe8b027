//! Bilinear resampling with half-pixel centers and edge clamping.

use crate::element::Element;

/// Interpolation taps along one axis: for each destination index the two
/// source indices and the weight of the second one.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisTaps {
    taps: Vec<(usize, usize, f64)>,
}

impl AxisTaps {
    pub fn new(src_len: usize, dst_len: usize) -> Self {
        let scale = src_len as f64 / dst_len as f64;
        let last = (src_len - 1) as f64;
        let taps = (0..dst_len)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect();
        Self { taps }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResizePlan {
    pub in_shape: [usize; 4],
    pub out_h: usize,
    pub out_w: usize,
    rows: AxisTaps,
    cols: AxisTaps,
}

impl ResizePlan {
    pub fn new(in_shape: [usize; 4], out_h: usize, out_w: usize) -> Self {
        Self {
            in_shape,
            out_h,
            out_w,
            rows: AxisTaps::new(in_shape[2], out_h),
            cols: AxisTaps::new(in_shape[3], out_w),
        }
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.in_shape[0], self.in_shape[1], self.out_h, self.out_w]
    }

    fn is_identity(&self) -> bool {
        self.in_shape[2] == self.out_h && self.in_shape[3] == self.out_w
    }

    pub fn forward<E: Element>(&self, input: &[E]) -> Vec<E> {
        if self.is_identity() {
            return input.to_vec();
        }
        let [n, c, h, w] = self.in_shape;
        let mut out = Vec::with_capacity(n * c * self.out_h * self.out_w);
        for plane in input.chunks(h * w).take(n * c) {
            for &(y0, y1, fy) in &self.rows.taps {
                let fy = E::from_f64(fy);
                for &(x0, x1, fx) in &self.cols.taps {
                    let fx = E::from_f64(fx);
                    let top = plane[y0 * w + x0] * (E::ONE - fx) + plane[y0 * w + x1] * fx;
                    let bottom = plane[y1 * w + x0] * (E::ONE - fx) + plane[y1 * w + x1] * fx;
                    out.push(top * (E::ONE - fy) + bottom * fy);
                }
            }
        }
        out
    }

    pub fn backward<E: Element>(&self, grad_out: &[E]) -> Vec<E> {
        if self.is_identity() {
            return grad_out.to_vec();
        }
        let [n, c, h, w] = self.in_shape;
        let mut grad = vec![E::ZERO; n * c * h * w];
        let out_plane = self.out_h * self.out_w;
        for (plane, go) in grad.chunks_mut(h * w).zip(grad_out.chunks(out_plane)) {
            let mut it = go.iter();
            for &(y0, y1, fy) in &self.rows.taps {
                let fy = E::from_f64(fy);
                for &(x0, x1, fx) in &self.cols.taps {
                    let fx = E::from_f64(fx);
                    let g = *it.next().expect("grad length");
                    let gt = g * (E::ONE - fy);
                    let gb = g * fy;
                    plane[y0 * w + x0] += gt * (E::ONE - fx);
                    plane[y0 * w + x1] += gt * fx;
                    plane[y1 * w + x0] += gb * (E::ONE - fx);
                    plane[y1 * w + x1] += gb * fx;
                }
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_samples_between_pixels() {
        let taps = AxisTaps::new(4, 2);
        assert_eq!(taps.taps, vec![(0, 1, 0.5), (2, 3, 0.5)]);
    }

    #[test]
    fn upsampling_clamps_at_edges() {
        let taps = AxisTaps::new(2, 4);
        assert_eq!(taps.taps[0], (0, 1, 0.0));
        assert_eq!(taps.taps[3], (1, 1, 0.0));
    }
}
