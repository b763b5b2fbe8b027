use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use msprl::data::{Dataset, DatasetSpec, Split};
use msprl::halftone::{floyd_steinberg, gaussian_baseline, DEFAULT_SIGMA};
use msprl::net::{dump_feature_maps, LayerSelector, ModelConfig, MsprlModel};
use msprl::train::{
    ablate, evaluate, Checkpoint, GaussianRestorer, InputMode, Restorer, RunConfig, Trainer,
};
use msprl::{GrayImage, HalftoneImage};

#[derive(Parser)]
#[command(name = "msprl", version, about = "Inverse halftoning with a multiscale progressively residual network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Gaussian,
}

#[derive(Subcommand)]
enum Command {
    /// Floyd–Steinberg halftone of a P5 image (output bytes are 0 or 255)
    Halftone {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Restore a continuous-tone image from a halftone
    Restore {
        /// Trained checkpoint (required unless --baseline is given)
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Use a non-learned baseline instead of a checkpoint
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Gaussian baseline standard deviation
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
    },
    /// Train a model; checkpoints go to --out
    Train {
        /// `key = value` run configuration
        #[arg(long)]
        config: PathBuf,
        /// Directory of P5 images (train.txt / val.txt split lists optional)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint (or baseline) on held-out images and write CSV
    Evaluate {
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        /// Directory of P5 images (test.txt split list optional)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
    },
    /// Train and score every SFE × FF configuration from one seed
    Ablate {
        /// Grid axes; only `sfe,ff` is supported
        #[arg(long, default_value = "sfe,ff")]
        grid: String,
        #[arg(long)]
        config: PathBuf,
        /// Training images; test.txt, if present, selects the scoring set
        #[arg(long)]
        data: PathBuf,
        /// Write the CSV here instead of standard output
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the parameter count and per-block breakdown
    Summary {
        /// Checkpoint to describe; without it the default architecture is used
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
        /// Run configuration whose architecture keys are described
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write min-max normalized feature maps of one layer as P5 images
    DumpFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Block and residual-block index, e.g. EB2/layer7
        #[arg(long)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Halftone { input, output } => {
            let img = GrayImage::load(&input)?;
            floyd_steinberg(&img).to_gray().save(&output)?;
        }
        Command::Restore {
            checkpoint,
            input,
            output,
            baseline,
            sigma,
        } => {
            let img = GrayImage::load(&input)?;
            let restored = match baseline {
                Some(Baseline::Gaussian) => gaussian_baseline(&bilevel(&img, &input)?, sigma)?,
                None => {
                    let model = load_model(checkpoint.as_deref())?;
                    let img = crop_for_model(img, &input)?;
                    Restorer::restore(&model, &img)?
                }
            };
            restored.save(&output)?;
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => cmd_train(&config, &data, &out, resume.as_deref())?,
        Command::Evaluate {
            checkpoint,
            data,
            csv,
            baseline,
            sigma,
        } => {
            let test = open_eval_set(&data)?;
            let report = match baseline {
                Some(Baseline::Gaussian) => evaluate(&GaussianRestorer { sigma }, &test, InputMode::Halftone)?,
                None => evaluate(&load_model(checkpoint.as_deref())?, &test, InputMode::Halftone)?,
            };
            for r in &report.records {
                if let Some((h, w)) = r.cropped_from {
                    eprintln!("warning: {} center-cropped from {h}x{w}", r.path);
                }
            }
            report.write_csv(&csv)?;
            println!("MEAN psnr_db={} ssim={}", report.mean_psnr(), report.mean_ssim());
        }
        Command::Ablate {
            grid,
            config,
            data,
            csv,
        } => {
            let axes: Vec<&str> = grid.split(',').map(str::trim).collect();
            if axes != ["sfe", "ff"] && axes != ["ff", "sfe"] {
                bail!("unsupported grid `{grid}`; expected `sfe,ff`");
            }
            let cfg = RunConfig::load(&config)?;
            let train_set = open_train_set(&data, cfg.train.min_side)?;
            let eval_set = if DatasetSpec::new(&data, Split::Test).split_file().is_file() {
                open_eval_set(&data)?
            } else {
                (*train_set).clone()
            };
            let report = ablate::<f32>(&cfg, train_set, &eval_set, |row| {
                eprintln!(
                    "sfe={} ff={} parameters={} psnr_db={}",
                    u8::from(row.enable_sfe),
                    u8::from(row.enable_ff),
                    row.parameters,
                    row.psnr_db
                );
            })?;
            match csv {
                Some(path) => report.write_csv(&path)?,
                None => print!("{}", report.to_csv()),
            }
        }
        Command::Summary { checkpoint, config } => {
            let model = match (checkpoint, config) {
                (Some(path), _) => load_model(Some(&path))?,
                (None, Some(path)) => MsprlModel::new(RunConfig::load(&path)?.model)?,
                (None, None) => MsprlModel::new(ModelConfig::default())?,
            };
            print!("{}", summary(&model));
        }
        Command::DumpFeatures {
            checkpoint,
            input,
            layer,
            out,
        } => {
            let selector: LayerSelector = layer.parse()?;
            let model = load_model(Some(&checkpoint))?;
            let img = crop_for_model(GrayImage::load(&input)?, &input)?;
            let maps = dump_feature_maps(&model, &img, selector)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let stem = selector.to_string().replace('/', "_");
            for (c, m) in maps.iter().enumerate() {
                m.save(out.join(format!("{stem}_c{c:03}.pgm")))?;
            }
            println!("wrote {} maps to {}", maps.len(), out.display());
        }
    }
    Ok(())
}

fn bilevel(img: &GrayImage, path: &Path) -> Result<HalftoneImage> {
    HalftoneImage::from_gray(img).with_context(|| format!("{} is not a halftone", path.display()))
}

fn crop_for_model(img: GrayImage, path: &Path) -> Result<GrayImage> {
    Ok(match img.center_crop_to_multiple(4)? {
        Some(c) => {
            eprintln!(
                "warning: {} center-cropped from {}x{} to {}x{}",
                path.display(),
                img.height(),
                img.width(),
                c.height(),
                c.width()
            );
            c
        }
        None => img,
    })
}

fn load_model(path: Option<&Path>) -> Result<MsprlModel<f32>> {
    let path = path.context("--checkpoint is required")?;
    Ok(Checkpoint::<f32>::load(path)?.model)
}

fn open_train_set(data: &Path, min_side: usize) -> Result<Arc<Dataset>> {
    let ds = Dataset::open(&DatasetSpec::new(data, Split::Train).with_min_side(min_side))?;
    for s in &ds.skipped {
        eprintln!("warning: skipping {s}: shorter side below {min_side}");
    }
    if ds.is_empty() {
        bail!("no training images in {} with sides of at least {min_side}", data.display());
    }
    Ok(Arc::new(ds))
}

fn open_eval_set(data: &Path) -> Result<Dataset> {
    Ok(Dataset::open(&DatasetSpec::new(data, Split::Test).with_min_side(1))?)
}

fn cmd_train(config: &Path, data: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    cfg.train.checkpoint_dir = Some(out.to_path_buf());
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let train_set = open_train_set(data, cfg.train.min_side)?;
    let state = match resume {
        Some(path) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            Checkpoint::<f32>::from_bytes_for(&bytes, &cfg.model)?
        }
        None => Checkpoint::initial(MsprlModel::new(cfg.model.clone())?, cfg.train.seed),
    };
    println!(
        "training {} parameters on {} images for {} iterations",
        state.model.count_parameters(),
        train_set.len(),
        cfg.train.total_iterations
    );
    let mut trainer = Trainer::new(state, train_set, cfg.train.clone())?.with_logger(|l| println!("{l}"));
    let val = DatasetSpec::new(data, Split::Val);
    if val.split_file().is_file() {
        trainer = trainer.with_validation(Arc::new(Dataset::open(&val.with_min_side(1))?));
    }
    trainer.run()?;
    if cfg.train.total_iterations == trainer.state().iteration && trainer.history().is_empty() {
        trainer.state().save(out.join("final.bin"))?;
    }
    Ok(())
}

fn summary(model: &MsprlModel<f32>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "parameters {}", model.count_parameters());
    for (block, n) in model.parameter_breakdown() {
        let _ = writeln!(s, "  {block:<6} {n}");
    }
    s
}
