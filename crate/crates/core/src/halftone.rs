//! Floyd-Steinberg error diffusion and a Gaussian low-pass baseline for
//! turning halftones back into continuous tone.

use crate::error::{Error, Result};
use crate::image::{GrayImage, HalftoneImage};

/// One error-diffusion tap: `(dx, dy)` offset from the current pixel and
/// the fraction of the quantization error it receives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionTap {
    pub dx: isize,
    pub dy: isize,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionKernel {
    pub taps: &'static [DiffusionTap],
}

impl DiffusionKernel {
    pub const FLOYD_STEINBERG: DiffusionKernel = DiffusionKernel {
        taps: &[
            DiffusionTap { dx: 1, dy: 0, weight: 7.0 / 16.0 },
            DiffusionTap { dx: -1, dy: 1, weight: 3.0 / 16.0 },
            DiffusionTap { dx: 0, dy: 1, weight: 5.0 / 16.0 },
            DiffusionTap { dx: 1, dy: 1, weight: 1.0 / 16.0 },
        ],
    };

    pub fn total_weight(&self) -> f64 {
        self.taps.iter().map(|t| t.weight).sum()
    }

    /// Every tap lands on a pixel visited later in a raster scan.
    pub fn is_causal(&self) -> bool {
        self.taps.iter().all(|t| t.dy > 0 || (t.dy == 0 && t.dx > 0))
    }
}

/// Binarizes with classic raster-order error diffusion.
///
/// Pixels whose accumulated value is `>= 0.5` become 1. Error pushed past
/// the image border is dropped.
pub fn floyd_steinberg(image: &GrayImage) -> HalftoneImage {
    diffuse(image, &DiffusionKernel::FLOYD_STEINBERG)
}

pub fn diffuse(image: &GrayImage, kernel: &DiffusionKernel) -> HalftoneImage {
    let (h, w) = (image.height(), image.width());
    let mut acc: Vec<f64> = image.pixels().to_vec();
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let v = acc[y * w + x];
            let bit = u8::from(v >= 0.5);
            out[y * w + x] = bit;
            let err = v - bit as f64;
            for t in kernel.taps {
                let (nx, ny) = (x as isize + t.dx, y as isize + t.dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    acc[ny as usize * w + nx as usize] += err * t.weight;
                }
            }
        }
    }
    HalftoneImage::new(h, w, out).expect("diffusion output is bilevel")
}

pub const DEFAULT_SIGMA: f64 = 1.2;

/// Normalized 1-D Gaussian taps over `[-⌈3σ⌉, ⌈3σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

/// Half-sample symmetric reflection: `… c b a | a b c … | … c b a`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur of the halftone, reflected at the borders and
/// clamped into `[0, 1]`.
pub fn gaussian_baseline(halftone: &HalftoneImage, sigma: f64) -> Result<GrayImage> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as isize;
    let (h, w) = (halftone.height(), halftone.width());
    let src: Vec<f64> = halftone.pixels().iter().map(|&p| p as f64).collect();

    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + reflect(x as isize + k as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[reflect(y as isize + k as isize - radius, h) * w + x])
                .sum();
        }
    }
    GrayImage::from_clamped(h, w, out)
}
