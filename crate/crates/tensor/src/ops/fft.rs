//! Unnormalized forward DFT. Power-of-two lengths use an iterative radix-2
//! Cooley-Tukey transform; other lengths fall back to the direct O(n²) sum.
//! All arithmetic is carried out in double precision.

use std::f64::consts::PI;

use crate::element::Element;

/// Radix-2 transform in place. `re.len()` must be a power of two.
pub fn fft_radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert!(n.is_power_of_two(), "radix-2 length must be a power of two");
    assert_eq!(n, im.len());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let twiddles: Vec<(f64, f64)> = (0..n / 2)
        .map(|k| {
            let (s, c) = (-2.0 * PI * k as f64 / n as f64).sin_cos();
            (c, s)
        })
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = twiddles[k * step];
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Direct evaluation of `X_k = Σ_j x_j e^{-2πi jk/n}`.
pub fn dft_naive(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            // reduce the phase index first to keep the angle small
            let phase = (j * k) % n;
            let (s, c) = (-2.0 * PI * phase as f64 / n as f64).sin_cos();
            sr += re[j] * c - im[j] * s;
            si += re[j] * s + im[j] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    (out_re, out_im)
}

pub fn transform_1d(re: &mut [f64], im: &mut [f64]) {
    if re.len().is_power_of_two() {
        fft_radix2(re, im);
    } else {
        let (r, i) = dft_naive(re, im);
        re.copy_from_slice(&r);
        im.copy_from_slice(&i);
    }
}

/// 2-D transform of one `h×w` plane: rows, then columns.
pub fn fft2d_plane(re: &mut [f64], im: &mut [f64], h: usize, w: usize) {
    for y in 0..h {
        transform_1d(&mut re[y * w..(y + 1) * w], &mut im[y * w..(y + 1) * w]);
    }
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col_re[y] = re[y * w + x];
            col_im[y] = im[y * w + x];
        }
        transform_1d(&mut col_re, &mut col_im);
        for y in 0..h {
            re[y * w + x] = col_re[y];
            im[y * w + x] = col_im[y];
        }
    }
}

/// Transforms every `h×w` plane of a real NCHW tensor.
pub fn fft2d_real<E: Element>(input: &[E], h: usize, w: usize) -> (Vec<E>, Vec<E>) {
    let mut out_re = Vec::with_capacity(input.len());
    let mut out_im = Vec::with_capacity(input.len());
    let plane = h * w;
    if plane == 0 {
        return (out_re, out_im);
    }
    let mut re = vec![0.0; plane];
    let mut im = vec![0.0; plane];
    for chunk in input.chunks(plane) {
        for (r, v) in re.iter_mut().zip(chunk) {
            *r = v.to_f64();
        }
        im.iter_mut().for_each(|v| *v = 0.0);
        fft2d_plane(&mut re, &mut im, h, w);
        out_re.extend(re.iter().map(|&v| E::from_f64(v)));
        out_im.extend(im.iter().map(|&v| E::from_f64(v)));
    }
    (out_re, out_im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radix2_matches_naive_1d() {
        for n in [1usize, 2, 4, 8, 32] {
            let re: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
            let im: Vec<f64> = (0..n).map(|i| (i as f64 * 0.4).cos()).collect();
            let (wr, wi) = dft_naive(&re, &im);
            let (mut fr, mut fi) = (re.clone(), im.clone());
            fft_radix2(&mut fr, &mut fi);
            for k in 0..n {
                assert!((fr[k] - wr[k]).abs() < 1e-12);
                assert!((fi[k] - wi[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_power_of_two_uses_direct_sum() {
        let mut re = vec![1.0, 0.0, 0.0];
        let mut im = vec![0.0; 3];
        transform_1d(&mut re, &mut im);
        assert_eq!(re, vec![1.0, 1.0, 1.0]);
    }
}
