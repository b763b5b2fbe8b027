//! Writes a synthetic grayscale corpus with train/test split lists.
//!
//! ```text
//! cargo run --release -p msprl-core --example make_corpus -- <dir> [train] [test] [side] [seed]
//! ```

use std::fs;
use std::path::PathBuf;

use msprl::data::{synth, write_images};

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> msprl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first().map(PathBuf::from) else {
        eprintln!("usage: make_corpus <dir> [train=120] [test=24] [side=96] [seed=0]");
        std::process::exit(2);
    };
    let (n_train, n_test): (usize, usize) = (arg(&args, 1, 120), arg(&args, 2, 24));
    let side: usize = arg(&args, 3, 96);
    let seed: u64 = arg(&args, 4, 0);

    let mut images = synth::generate_named(n_train + n_test, side, side, seed)?;
    write_images(&dir, &images)?;
    let test = images.split_off(n_train);
    let list = |set: &[(String, _)]| set.iter().map(|(n, _)| format!("{n}\n")).collect::<String>();
    for (name, text) in [("train.txt", list(&images)), ("test.txt", list(&test))] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| msprl::Error::io(&path, e))?;
    }
    println!("{} train + {} test images ({side}x{side}) in {}", n_train, n_test, dir.display());
    Ok(())
}
