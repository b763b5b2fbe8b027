use std::f64::consts::PI;

use msprl::loss::{evaluate_loss, fft_loss, l1_loss, total_loss, LossWeights};
use msprl::metrics::{parse_value, psnr, ssim, MetricRecord, MetricReport};
use msprl::GrayImage;
use msprl_tensor::gradcheck::max_relative_error;
use msprl_tensor::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
}

fn l1_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a.data()[i] - b.data()[i]).abs();
    }
    s / a.len() as f64
}

/// Zero-padded naive 2-D DFT of one plane: (re, im), each ph×pw.
fn dft(plane: &[f64], h: usize, w: usize, ph: usize, pw: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; ph * pw];
    let mut im = vec![0.0; ph * pw];
    for u in 0..ph {
        for v in 0..pw {
            for y in 0..h {
                for x in 0..w {
                    let ang = -2.0 * PI * ((u * y) as f64 / ph as f64 + (v * x) as f64 / pw as f64);
                    re[u * pw + v] += plane[y * w + x] * ang.cos();
                    im[u * pw + v] += plane[y * w + x] * ang.sin();
                }
            }
        }
    }
    (re, im)
}

fn fft_loss_oracle(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (n, c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    let mut s = 0.0;
    for k in 0..n * c {
        let (ar, ai) = dft(&a.data()[k * h * w..(k + 1) * h * w], h, w, ph, pw);
        let (br, bi) = dft(&b.data()[k * h * w..(k + 1) * h * w], h, w, ph, pw);
        for i in 0..ph * pw {
            s += (ar[i] - br[i]).abs() + (ai[i] - bi[i]).abs();
        }
    }
    s / (2 * n * c * ph * pw) as f64
}

#[test]
fn l1_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for shape in [[1, 1, 4, 4], [3, 1, 7, 5], [2, 2, 16, 16]] {
        let (a, b) = (rand_tensor(shape, &mut rng), rand_tensor(shape, &mut rng));
        let v = evaluate_loss(&a, &b, LossWeights::default()).unwrap();
        assert!((v.l1 - l1_oracle(&a, &b)).abs() <= 1e-10);
    }
}

#[test]
fn fft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for shape in [[1, 1, 8, 8], [2, 1, 6, 10], [1, 1, 3, 4], [1, 1, 16, 16]] {
        let (a, b) = (rand_tensor(shape, &mut rng), rand_tensor(shape, &mut rng));
        let v = evaluate_loss(&a, &b, LossWeights::default()).unwrap();
        let want = fft_loss_oracle(&a, &b);
        assert!((v.fft - want).abs() <= 1e-9 * want.max(1.0), "{shape:?}: {} vs {want}", v.fft);
    }
}

#[test]
fn fft_of_scaled_constant_is_dc_only() {
    let t = Tensor::<f64>::full([1, 1, 4, 4], 0.25);
    let y = Tensor::<f64>::full([1, 1, 4, 4], 0.5);
    let v = evaluate_loss(&y, &t, LossWeights::default()).unwrap();
    // only DC differs: |16·0.5 − 16·0.25| = 4 over 2·16 spectral entries
    assert!((v.fft - 4.0 / 32.0).abs() < 1e-12);
    assert!((v.fft - fft_loss_oracle(&y, &t)).abs() < 1e-12);
}

#[test]
fn homogeneity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (y, t) = (rand_tensor([1, 1, 8, 8], &mut rng), rand_tensor([1, 1, 8, 8], &mut rng));
    let base = evaluate_loss(&y, &t, LossWeights::default()).unwrap();
    for a in [0.0, 0.5, 3.0] {
        let scale = |x: &Tensor<f64>| Tensor::from_fn([1, 1, 8, 8], |i| a * x.data()[i]);
        let v = evaluate_loss(&scale(&y), &scale(&t), LossWeights::default()).unwrap();
        assert!((v.fft - a * base.fft).abs() <= 1e-12 * base.fft.max(1.0) * a.max(1.0));
        assert!((v.l1 - a * base.l1).abs() <= 1e-12);
    }
}

#[test]
fn total_decomposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let (y, t) = (rand_tensor([2, 1, 8, 8], &mut rng), rand_tensor([2, 1, 8, 8], &mut rng));
        let v = evaluate_loss(&y, &t, LossWeights::default()).unwrap();
        assert!((v.total - (v.l1 + 0.1 * v.fft)).abs() <= 1e-12);
        let l1_only = evaluate_loss(&y, &t, LossWeights::new(0.0).unwrap()).unwrap();
        assert_eq!(l1_only.total.to_bits(), l1_only.l1.to_bits());
    }
    let z = rand_tensor([1, 1, 6, 6], &mut rng);
    let v = evaluate_loss(&z, &z, LossWeights::default()).unwrap();
    assert_eq!((v.total, v.l1, v.fft), (0.0, 0.0, 0.0));
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..5 {
        let shape = if k % 2 == 0 { [1, 1, 4, 4] } else { [2, 1, 3, 6] };
        let inputs = [rand_tensor(shape, &mut rng), rand_tensor(shape, &mut rng)];
        for which in 0..3 {
            let err = max_relative_error(
                &inputs,
                |g: &mut Graph<f64>, v| {
                    Ok(match which {
                        0 => l1_loss(g, v[0], v[1]).unwrap(),
                        1 => fft_loss(g, v[0], v[1]).unwrap(),
                        _ => total_loss(g, v[0], v[1], LossWeights::default()).unwrap().total,
                    })
                },
                1e-6,
                k,
            )
            .unwrap();
            assert!(err <= 1e-4, "loss {which}: {err}");
        }
    }
}

#[test]
fn psnr_values() {
    let a = GrayImage::filled(16, 16, 0.3).unwrap();
    let b = GrayImage::filled(16, 16, 0.4).unwrap();
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    assert!(psnr(&a, &GrayImage::filled(16, 8, 0.3).unwrap()).is_err());

    let base = GrayImage::from_fn(32, 32, |y, x| 0.3 + 0.4 * ((y + x) % 7) as f64 / 7.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pattern: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
        let noisy = GrayImage::from_clamped(32, 32, base.pixels().iter().zip(&pattern).map(|(p, n)| p + amp * n)).unwrap();
        let v = psnr(&base, &noisy).unwrap();
        assert!(v < last);
        last = v;
    }
}

/// Per-window SSIM with an explicit 11×11 kernel.
fn ssim_oracle(a: &GrayImage, b: &GrayImage) -> f64 {
    let g1: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let s: f64 = g1.iter().sum();
    let (c1, c2) = (0.0001, 0.0009);
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = g1[i] * g1[j] / (s * s);
                    let (pa, pb) = (a.get(y + i, x + j), b.get(y + i, x + j));
                    ma += k * pa;
                    mb += k * pb;
                    saa += k * pa * pa;
                    sbb += k * pb * pb;
                    sab += k * pa * pb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = GrayImage::from_fn(24, 19, |_, _| rng.gen_range(0.0..1.0)).unwrap();
    let b = GrayImage::from_fn(24, 19, |y, x| (a.get(y, x) * 0.7 + 0.1 * (x % 3) as f64).min(1.0)).unwrap();
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
    assert!((ssim(&a, &b).unwrap() - ssim_oracle(&a, &b)).abs() <= 1e-12);
    assert_eq!(ssim(&a, &b).unwrap().to_bits(), ssim(&b, &a).unwrap().to_bits());

    let black = GrayImage::filled(16, 16, 0.0).unwrap();
    let white = GrayImage::filled(16, 16, 1.0).unwrap();
    let v = ssim(&black, &white).unwrap();
    // constant images: (C1)(C2) / ((1 + C1)(C2))
    assert!((v - 0.0001 / 1.0001).abs() < 1e-12);
    assert!(v < 0.01);
    assert!(ssim(&GrayImage::filled(10, 30, 0.5).unwrap(), &GrayImage::filled(10, 30, 0.5).unwrap()).is_err());
}

#[test]
fn report_mean_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<_> = (0..7)
        .map(|i| MetricRecord {
            path: format!("img{i}.pgm"),
            psnr_db: rng.gen_range(15.0..40.0),
            ssim: rng.gen_range(0.0..1.0),
            cropped_from: None,
        })
        .collect();
    let report = MetricReport { records: records.clone() };
    let csv = report.to_csv();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["path", "psnr_db", "ssim"]);
    assert_eq!(rows.len(), 9);
    let parsed: Vec<f64> = rows[1..8].iter().map(|r| parse_value(r[1]).unwrap()).collect();
    let mean = parsed.iter().sum::<f64>() / 7.0;
    assert_eq!(rows[8][0], "MEAN");
    assert!((parse_value(rows[8][1]).unwrap() - mean).abs() <= 1e-9);
}

proptest! {
    #[test]
    fn loss_is_zero_only_for_identical(seed: u64, idx in 0usize..16, delta in 1e-3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rand_tensor([1, 1, 4, 4], &mut rng);
        let same = evaluate_loss(&t, &t, LossWeights::default()).unwrap();
        prop_assert_eq!(same.total, 0.0);
        let mut y = t.clone();
        y.data_mut()[idx] += delta;
        let v = evaluate_loss(&y, &t, LossWeights::default()).unwrap();
        prop_assert!(v.total > 0.0);
    }

    #[test]
    fn ssim_is_bounded(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = GrayImage::from_fn(12, 14, |_, _| rng.gen_range(0.0..1.0)).unwrap();
        let b = GrayImage::from_fn(12, 14, |_, _| rng.gen_range(0.0..1.0)).unwrap();
        let v = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn padding_keeps_zero_loss(h in 1usize..12, w in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rand_tensor([1, 1, h, w], &mut rng);
        prop_assert_eq!(evaluate_loss(&t, &t, LossWeights::default()).unwrap().fft, 0.0);
    }
}
