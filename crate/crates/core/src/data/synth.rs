//! Procedural grayscale scenes for desk-scale experiments when no photo
//! corpus is at hand: shaded backgrounds, overlapping flat and textured
//! shapes with anti-aliased edges, and smooth low-amplitude grain.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::sampler::batch_rng;
use crate::error::Result;
use crate::image::GrayImage;

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, angle: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64, angle: f64 },
}

struct Fill {
    base: f64,
    stripe_amp: f64,
    stripe_freq: f64,
    stripe_angle: f64,
}

impl Shape {
    /// Signed distance-like coverage in `[0, 1]` with a one-pixel ramp.
    fn coverage(&self, y: f64, x: f64) -> f64 {
        let (cy, cx, angle) = match *self {
            Shape::Ellipse { cy, cx, angle, .. } | Shape::Rect { cy, cx, angle, .. } => (cy, cx, angle),
        };
        let (s, c) = angle.sin_cos();
        let (dy, dx) = (y - cy, x - cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let dist = match *self {
            Shape::Ellipse { ry, rx, .. } => {
                let r = ((u / rx).powi(2) + (v / ry).powi(2)).sqrt();
                (r - 1.0) * rx.min(ry)
            }
            Shape::Rect { hy, hx, .. } => (u.abs() - hx).max(v.abs() - hy),
        };
        (0.5 - dist).clamp(0.0, 1.0)
    }
}

impl Fill {
    fn value(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.stripe_angle.sin_cos();
        self.base + self.stripe_amp * (self.stripe_freq * (c * x + s * y)).sin()
    }
}

fn scene(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Result<GrayImage> {
    let (hf, wf) = (height as f64, width as f64);
    let base = rng.gen_range(0.2..0.8);
    let gy = rng.gen_range(-0.4..0.4) / hf;
    let gx = rng.gen_range(-0.4..0.4) / wf;

    let shape_count = rng.gen_range(3..9);
    let mut shapes = Vec::with_capacity(shape_count);
    for _ in 0..shape_count {
        let cy = rng.gen_range(0.0..hf);
        let cx = rng.gen_range(0.0..wf);
        let angle = rng.gen_range(0.0..PI);
        let scale = hf.min(wf);
        let shape = if rng.gen_bool(0.5) {
            Shape::Ellipse {
                cy,
                cx,
                ry: rng.gen_range(0.06..0.35) * scale,
                rx: rng.gen_range(0.06..0.35) * scale,
                angle,
            }
        } else {
            Shape::Rect {
                cy,
                cx,
                hy: rng.gen_range(0.05..0.3) * scale,
                hx: rng.gen_range(0.05..0.3) * scale,
                angle,
            }
        };
        let textured = rng.gen_bool(0.3);
        let fill = Fill {
            base: rng.gen_range(0.05..0.95),
            stripe_amp: if textured { rng.gen_range(0.05..0.2) } else { 0.0 },
            stripe_freq: rng.gen_range(0.3..1.2),
            stripe_angle: rng.gen_range(0.0..PI),
        };
        shapes.push((shape, fill));
    }

    let grain: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.005..0.02),
                rng.gen_range(0.05..0.4),
                rng.gen_range(0.05..0.4),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();

    GrayImage::from_fn(height, width, |y, x| {
        let (yf, xf) = (y as f64, x as f64);
        let mut v = base + gy * (yf - hf / 2.0) + gx * (xf - wf / 2.0);
        for (shape, fill) in &shapes {
            let a = shape.coverage(yf, xf);
            if a > 0.0 {
                v = v * (1.0 - a) + fill.value(yf, xf) * a;
            }
        }
        for &(amp, fy, fx, phase) in &grain {
            v += amp * (fy * yf + fx * xf + phase).sin();
        }
        v.clamp(0.0, 1.0)
    })
}

/// `count` scenes of `height×width`; image `i` depends only on `(seed, i)`.
pub fn generate(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<GrayImage>> {
    (0..count)
        .map(|i| scene(&mut batch_rng(seed ^ 0x5eed_0f_5ce7e5, i as u64), height, width))
        .collect()
}

/// Like [`generate`] with file names `synth_0000.pgm`, … .
pub fn generate_named(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<(String, GrayImage)>> {
    Ok(generate(count, height, width, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, img)| (format!("synth_{i:04}.pgm"), img))
        .collect())
}
