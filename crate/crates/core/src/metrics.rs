//! Full-reference image quality metrics.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{write_atomic, GrayImage};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_sizes(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::SizeMismatch(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for peak 1.0. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_sizes(a, b)?;
    let se: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum();
    let mse = se / a.pixels().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable weighted sum over every fully contained window.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 and dynamic range 1, averaged over valid window positions.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_sizes(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::SizeMismatch(format!(
            "ssim needs sides of at least {SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let k = gaussian_window();
    let (pa, pb) = (a.pixels(), b.pixels());
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let cross: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(pa, h, w, &k);
    let mu_b = filter_valid(pb, h, w, &k);
    let ea2 = filter_valid(&sq(pa), h, w, &k);
    let eb2 = filter_valid(&sq(pb), h, w, &k);
    let eab = filter_valid(&cross, h, w, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = ea2[i] - ma * ma;
        let vb = eb2[i] - mb * mb;
        let cov = eab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub path: String,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Original size when the image was center-cropped before restoration.
    pub cropped_from: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub records: Vec<MetricRecord>,
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl MetricReport {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.records.iter().map(|r| r.psnr_db))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.records.iter().map(|r| r.ssim))
    }

    /// `path,psnr_db,ssim` header, one row per record, then the `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,psnr_db,ssim\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.path, fmt_value(r.psnr_db), fmt_value(r.ssim));
        }
        let _ = writeln!(s, "MEAN,{},{}", fmt_value(self.mean_psnr()), fmt_value(self.mean_ssim()));
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Parses a value written by [`MetricReport::to_csv`].
pub fn parse_value(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}
