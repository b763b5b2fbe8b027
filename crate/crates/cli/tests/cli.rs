use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msprl::data::{synth, write_images};
use msprl::image::decode_pgm;
use msprl::metrics::{parse_value, psnr};
use msprl::GrayImage;

fn msprl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msprl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = msprl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn payload(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    let img = decode_pgm(&bytes).unwrap();
    bytes[bytes.len() - img.height() * img.width()..].to_vec()
}

const TINY: &str = "total_iterations = 6\nbatch_size = 2\npatch_size = 16\nmin_side = 16\nbase_channels = 4\nrb_per_block = 1\nvalidation_interval = 0\ncheckpoint_interval = 0\nlog_interval = 2\nseed = 3\n";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_images(&dir.path().join("data"), &synth::generate_named(4, 24, 28, 1).unwrap()).unwrap();
        fs::write(dir.path().join("run.cfg"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn trained(&self) -> PathBuf {
        let out = self.path("run");
        ok(&["train", "--config", s(&self.path("run.cfg")), "--data", s(&self.path("data")), "--out", s(&out)]);
        out.join("final.bin")
    }
}

#[test]
fn halftone_contracts() {
    let f = Fixture::new();
    let black = f.path("black.pgm");
    GrayImage::filled(8, 8, 0.0).unwrap().save(&black).unwrap();
    let out = f.path("black_ht.pgm");
    ok(&["halftone", "--input", s(&black), "--output", s(&out)]);
    assert!(payload(&out).iter().all(|&b| b == 0));

    let src = f.path("data/synth_0000.pgm");
    let ht = f.path("ht.pgm");
    ok(&["halftone", "--input", s(&src), "--output", s(&ht)]);
    assert!(payload(&ht).iter().all(|&b| b == 0 || b == 255));
    let again = f.path("ht2.pgm");
    ok(&["halftone", "--input", s(&ht), "--output", s(&again)]);
    assert_eq!(fs::read(&ht).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn restore_paths() {
    let f = Fixture::new();
    let ht = f.path("const.pgm");
    GrayImage::filled(10, 12, 1.0).unwrap().save(&ht).unwrap();
    let out = f.path("restored.pgm");
    ok(&["restore", "--baseline", "gaussian", "--input", s(&ht), "--output", s(&out)]);
    assert!(payload(&out).iter().all(|&b| b == 255));

    let ckpt = f.trained();
    let odd = f.path("odd.pgm");
    let ht_img = msprl::halftone::floyd_steinberg(&GrayImage::filled(14, 22, 0.4).unwrap()).to_gray();
    ht_img.save(&odd).unwrap();
    let out = msprl(&["restore", "--checkpoint", s(&ckpt), "--input", s(&odd), "--output", s(&f.path("m.pgm"))]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("center-cropped"));
    let img = GrayImage::load(f.path("m.pgm")).unwrap();
    assert_eq!((img.height(), img.width()), (12, 20));

    // stability probe: restore, re-halftone, restore again; recorded only
    let first = GrayImage::load(f.path("m.pgm")).unwrap();
    let re_ht = f.path("re_ht.pgm");
    ok(&["halftone", "--input", s(&f.path("m.pgm")), "--output", s(&re_ht)]);
    ok(&["restore", "--checkpoint", s(&ckpt), "--input", s(&re_ht), "--output", s(&f.path("m2.pgm"))]);
    let second = GrayImage::load(f.path("m2.pgm")).unwrap();
    assert_eq!((second.height(), second.width()), (12, 20));
    eprintln!("re-restoration psnr {} dB", psnr(&first, &second).unwrap());
}

#[test]
fn train_logs_and_checkpoints() {
    let f = Fixture::new();
    let out = f.path("run");
    let stdout = ok(&["train", "--config", s(&f.path("run.cfg")), "--data", s(&f.path("data")), "--out", s(&out)]);
    let iters: Vec<&str> = stdout.lines().filter(|l| l.starts_with("iter=")).collect();
    assert_eq!(iters.len(), 3);
    assert!(out.join("final.bin").is_file());

    // resuming a finished run is a no-op that keeps the checkpoint intact
    let before = fs::read(out.join("final.bin")).unwrap();
    let out2 = f.path("run2");
    ok(&[
        "train",
        "--config",
        s(&f.path("run.cfg")),
        "--data",
        s(&f.path("data")),
        "--out",
        s(&out2),
        "--resume",
        s(&out.join("final.bin")),
    ]);
    assert_eq!(fs::read(out2.join("final.bin")).unwrap(), before);
}

#[test]
fn evaluate_mean_row() {
    let f = Fixture::new();
    let ckpt = f.trained();
    for extra in [vec!["--checkpoint", s(&ckpt)], vec!["--baseline", "gaussian"]] {
        let csv = f.path("eval.csv");
        let data = f.path("data");
        let mut args = vec!["evaluate", "--data", s(&data), "--csv", s(&csv)];
        args.extend(extra);
        ok(&args);
        let text = fs::read_to_string(&csv).unwrap();
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0], ["path", "psnr_db", "ssim"]);
        assert_eq!(rows.len(), 6);
        for col in 1..3 {
            let vals: Vec<f64> = rows[1..5].iter().map(|r| parse_value(r[col]).unwrap()).collect();
            let mean = vals.iter().sum::<f64>() / 4.0;
            assert!((parse_value(rows[5][col]).unwrap() - mean).abs() <= 1e-9);
        }
    }
}

#[test]
fn ablate_emits_four_rows() {
    let f = Fixture::new();
    let csv = f.path("ablation.csv");
    ok(&[
        "ablate",
        "--grid",
        "sfe,ff",
        "--config",
        s(&f.path("run.cfg")),
        "--data",
        s(&f.path("data")),
        "--csv",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sfe,ff,parameters,final_loss,psnr_db,ssim");
    let mut flags: Vec<(&str, &str)> = lines[1..]
        .iter()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            assert_eq!(c.len(), 6);
            (c[0], c[1])
        })
        .collect();
    flags.sort();
    assert_eq!(flags, [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]);
    assert!(!msprl(&["ablate", "--grid", "sfe", "--config", s(&f.path("run.cfg")), "--data", s(&f.path("data"))]).status.success());
}

#[test]
fn summary_of_default_architecture() {
    let out = ok(&["summary"]);
    let mut lines = out.lines();
    let total: usize = lines.next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((total as f64 - 9_681_505.0).abs() / 9_681_505.0 <= 0.15);
    let sum: usize = lines.map(|l| l.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(sum, total);
}

#[test]
fn dump_features_writes_one_map_per_channel() {
    let f = Fixture::new();
    let ckpt = f.trained();
    let out = f.path("maps");
    ok(&[
        "dump-features",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&f.path("data/synth_0001.pgm")),
        "--layer",
        "EB2/layer1",
        "--out",
        s(&out),
    ]);
    let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    assert_eq!(names[0], "EB2_layer1_c000.pgm");
    let m = GrayImage::load(out.join("EB2_layer1_c000.pgm")).unwrap();
    assert_eq!((m.height(), m.width()), (12, 14));

    let bad = msprl(&["dump-features", "--checkpoint", s(&ckpt), "--input", s(&f.path("data/synth_0001.pgm")), "--layer", "EB9/1", "--out", s(&out)]);
    assert!(!bad.status.success());
}

#[test]
fn failures_exit_nonzero_without_partial_outputs() {
    let f = Fixture::new();
    let out = f.path("never.pgm");
    let r = msprl(&["halftone", "--input", s(&f.path("missing.pgm")), "--output", s(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
    assert!(!out.exists());

    let bad_ckpt = f.path("bad.bin");
    fs::write(&bad_ckpt, b"MSPRLCKP garbage").unwrap();
    let r = msprl(&["restore", "--checkpoint", s(&bad_ckpt), "--input", s(&f.path("data/synth_0000.pgm")), "--output", s(&out)]);
    assert!(!r.status.success());
    assert!(!out.exists());

    let r = msprl(&["restore", "--baseline", "gaussian", "--input", s(&f.path("data/synth_0000.pgm")), "--output", s(&out)]);
    assert!(!r.status.success(), "continuous input is not a halftone");

    fs::write(f.path("typo.cfg"), "batch_sise = 2\n").unwrap();
    let r = msprl(&["train", "--config", s(&f.path("typo.cfg")), "--data", s(&f.path("data")), "--out", s(&f.path("x"))]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("batch_sise"));

    assert!(!msprl(&[]).status.success());
    let leftovers: Vec<_> = fs::read_dir(f.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".tmp") || n.starts_with('.'))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn help_lists_flags_and_defaults() {
    for (cmd, flags) in [
        ("halftone", vec!["--input", "--output"]),
        ("restore", vec!["--checkpoint", "--input", "--output", "--baseline", "--sigma", "[default: 1.2]"]),
        ("train", vec!["--config", "--data", "--out"]),
        ("evaluate", vec!["--checkpoint", "--data", "--csv"]),
        ("ablate", vec!["--grid", "--config", "[default: sfe,ff]"]),
        ("summary", vec!["--checkpoint"]),
        ("dump-features", vec!["--checkpoint", "--input", "--layer", "--out"]),
    ] {
        let help = ok(&[cmd, "--help"]);
        for flag in flags {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}:\n{help}");
        }
    }
}
