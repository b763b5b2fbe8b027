use std::fs;
use std::sync::Arc;

use msprl::data::{augment_flip, make_batch, sample_patch, synth, BatchSampler, Dataset, DatasetSpec, Prefetcher, Split};
use msprl::halftone::floyd_steinberg;
use msprl::image::{decode_pgm, encode_pgm, quantize};
use msprl::{Error, GrayImage};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pgm(w: usize, h: usize, payload: &[u8]) -> Vec<u8> {
    let mut b = format!("P5\n{w} {h}\n255\n").into_bytes();
    b.extend_from_slice(payload);
    b
}

#[test]
fn byte_scaling() {
    let img = decode_pgm(&pgm(3, 1, &[255, 128, 0])).unwrap();
    assert_eq!(img.pixels(), &[1.0, 128.0 / 255.0, 0.0]);
    assert!((img.get(0, 1) - 0.50196).abs() < 1e-5);
}

#[test]
fn header_comments_and_errors() {
    let with_comment = b"P5 # made by hand\n2 1\n# depth\n255\n\x00\xff".to_vec();
    assert_eq!(decode_pgm(&with_comment).unwrap().pixels(), &[0.0, 1.0]);
    assert!(decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
    assert!(decode_pgm(b"P5\n2 2\n65535\n").is_err());
    assert!(decode_pgm(&pgm(2, 2, &[1, 2, 3])).is_err());
    assert!(decode_pgm(b"P5\nx 2\n255\n").is_err());
}

#[test]
fn file_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = pgm(5, 4, &(0..20).map(|i| (i * 13) as u8).collect::<Vec<_>>());
    let src = dir.path().join("a.pgm");
    fs::write(&src, &bytes).unwrap();
    let img = GrayImage::load(&src).unwrap();
    let dst = dir.path().join("b.pgm");
    img.save(&dst).unwrap();
    assert_eq!(fs::read(&dst).unwrap(), bytes);
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 2);
}

#[test]
fn quantize_rounds_half_up() {
    assert_eq!(quantize(0.5 / 255.0), 1);
    assert_eq!(quantize(0.49 / 255.0), 0);
    assert_eq!(quantize(1.5), 255);
    assert_eq!(quantize(-0.5), 0);
}

#[test]
fn crop_offsets_are_uniform() {
    // every pixel value encodes its own position exactly
    let img = GrayImage::from_fn(256, 256, |y, x| (y * 256 + x) as f64 / 65536.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut rows = vec![0usize; 129];
    let mut cols = vec![0usize; 129];
    for _ in 0..n {
        let p = sample_patch(&img, 128, &mut rng).unwrap();
        let id = (p.get(0, 0) * 65536.0) as usize;
        rows[id / 256] += 1;
        cols[id % 256] += 1;
    }
    // chi-square with 128 degrees of freedom; 0.99 quantile ≈ 168.1 (Wilson–Hilferty)
    let expected = n as f64 / 129.0;
    for counts in [&rows, &cols] {
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 168.1, "chi-square {chi2}");
    }
}

#[test]
fn flip_frequency() {
    let img = GrayImage::from_fn(2, 3, |_, x| x as f64 / 2.0).unwrap();
    let mirrored = img.flip_horizontal();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let flips = (0..n).filter(|_| augment_flip(img.clone(), &mut rng) == mirrored).count();
    let f = flips as f64 / n as f64;
    assert!((0.48..=0.52).contains(&f), "{f}");
}

#[test]
fn flip_involution_and_symmetric_patch() {
    let img = GrayImage::from_fn(3, 4, |y, x| (y * 4 + x) as f64 / 12.0).unwrap();
    assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    let sym = GrayImage::from_fn(3, 4, |_, x| if x == 0 || x == 3 { 0.2 } else { 0.7 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..8 {
        assert_eq!(augment_flip(sym.clone(), &mut rng), sym);
    }
}

#[test]
fn constant_crop_and_full_crop() {
    let img = GrayImage::filled(40, 30, 0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = sample_patch(&img, 16, &mut rng).unwrap();
    assert!(p.pixels().iter().all(|&v| v == 0.25));
    assert!(matches!(sample_patch(&img, 31, &mut rng), Err(Error::InvalidImage(_))));
}

#[test]
fn batches_pair_targets_with_their_halftones() {
    let patches = synth::generate(16, 128, 128, 9).unwrap();
    let (x, y) = make_batch::<f32>(&patches, floyd_steinberg).unwrap();
    assert_eq!(x.shape(), &[16, 1, 128, 128]);
    assert_eq!(y.shape(), &[16, 1, 128, 128]);
    for (k, p) in patches.iter().enumerate() {
        let ht = floyd_steinberg(p);
        let plane = &x.data()[k * 128 * 128..(k + 1) * 128 * 128];
        assert!(plane.iter().zip(ht.pixels()).all(|(&a, &b)| a == b as f32));
    }

    let black = [GrayImage::filled(4, 4, 0.0).unwrap()];
    let (x, y) = make_batch::<f64>(&black, floyd_steinberg).unwrap();
    assert!(x.data().iter().chain(y.data()).all(|&v| v == 0.0));

    let ragged = [GrayImage::filled(4, 4, 0.0).unwrap(), GrayImage::filled(4, 8, 0.0).unwrap()];
    assert!(matches!(make_batch::<f32>(&ragged, floyd_steinberg), Err(Error::SizeMismatch(_))));
}

#[test]
fn dataset_listing_and_size_filter() {
    let dir = tempfile::tempdir().unwrap();
    GrayImage::filled(300, 260, 0.5).unwrap().save(dir.path().join("big.pgm")).unwrap();
    GrayImage::filled(100, 400, 0.5).unwrap().save(dir.path().join("narrow.pgm")).unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let ds = Dataset::open(&DatasetSpec::new(dir.path(), Split::Train)).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.entries()[0].path, "big.pgm");
    assert_eq!(ds.skipped, vec!["narrow.pgm".to_string()]);
    assert!(ds.min_side().unwrap() >= 256);

    fs::write(dir.path().join("test.txt"), "narrow.pgm\n\n# comment\n").unwrap();
    let test = Dataset::open(&DatasetSpec::new(dir.path(), Split::Test).with_min_side(1)).unwrap();
    assert_eq!(test.len(), 1);
    assert_eq!(test.entries()[0].path, "narrow.pgm");
}

#[test]
fn sampler_is_reproducible_and_prefetch_matches() {
    let ds = Arc::new(Dataset::from_images(synth::generate_named(6, 48, 40, 2).unwrap()));
    let a = BatchSampler::new(ds.clone(), 3, 32, 77).unwrap();
    let b = BatchSampler::new(ds.clone(), 3, 32, 77).unwrap();
    for i in 0..5 {
        assert_eq!(a.patches(i).unwrap(), b.patches(i).unwrap());
    }
    assert_ne!(a.patches(0).unwrap(), a.patches(1).unwrap());
    let mut pf = Prefetcher::<f32>::spawn(a.clone(), 2, 6, 2);
    for i in 2..6 {
        let (idx, batch) = pf.next_batch().unwrap();
        assert_eq!(idx, i);
        assert_eq!(batch.unwrap(), a.batch::<f32>(i).unwrap());
    }
    assert!(pf.next_batch().is_none());
    // dropping early must not hang
    let pf = Prefetcher::<f32>::spawn(a.clone(), 0, 1000, 1);
    drop(pf);

    assert!(BatchSampler::new(ds.clone(), 3, 64, 0).is_err());
    assert!(BatchSampler::new(ds, 0, 32, 0).is_err());
    assert!(BatchSampler::new(Arc::new(Dataset::default()), 1, 1, 0).is_err());
}

#[test]
fn synthetic_corpus_is_deterministic_and_varied() {
    let a = synth::generate(4, 64, 64, 1).unwrap();
    assert_eq!(a, synth::generate(4, 64, 64, 1).unwrap());
    assert_ne!(a[0], a[1]);
    for img in &a {
        let spread = img.pixels().iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - img.pixels().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.2);
    }
}

proptest! {
    #[test]
    fn pgm_round_trip_on_byte_grid(h in 1usize..12, w in 1usize..12, seed: u64) {
        let mut x = seed;
        let payload: Vec<u8> = (0..h * w).map(|_| { x = x.wrapping_mul(6364136223846793005).wrapping_add(1); (x >> 56) as u8 }).collect();
        let bytes = pgm(w, h, &payload);
        let img = decode_pgm(&bytes).unwrap();
        prop_assert!(img.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(encode_pgm(&img), bytes);
    }
}
