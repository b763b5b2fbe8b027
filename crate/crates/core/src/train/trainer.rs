//! The optimization loop.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use msprl_tensor::{Element, Graph, Tensor, TensorError};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::evaluate::{evaluate, InputMode};
use super::optim::AdamW;
use super::schedule::cosine_lr;
use crate::data::{BatchSampler, Dataset, Prefetcher, DEFAULT_QUEUE_DEPTH};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::loss::{total_loss, LossValues, LossWeights};
use crate::net::MsprlModel;

/// Outcome of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based count of completed steps.
    pub iteration: u64,
    pub lr: f64,
    pub loss: LossValues,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        format!(
            "iter={} lr={:e} loss={} l1={} fft={}",
            self.iteration, self.lr, self.loss.total, self.loss.l1, self.loss.fft
        )
    }
}

type Logger = Box<dyn FnMut(&str) + Send>;

pub struct Trainer<E: Element = f32> {
    state: Checkpoint<E>,
    cfg: TrainConfig,
    optimizer: AdamW,
    weights: LossWeights,
    sampler: BatchSampler,
    validation: Option<Arc<Dataset>>,
    logger: Option<Logger>,
    history: Vec<StepRecord>,
}

impl<E: Element> Trainer<E> {
    /// Continues from `state`; batches are drawn with the checkpoint's seed.
    pub fn new(state: Checkpoint<E>, dataset: Arc<Dataset>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if state.iteration > cfg.total_iterations {
            return Err(Error::InvalidArgument(format!(
                "checkpoint is at iteration {} but the run has only {}",
                state.iteration, cfg.total_iterations
            )));
        }
        let sampler = BatchSampler::new(dataset, cfg.batch_size, cfg.patch_size, state.seed)?;
        Ok(Self {
            optimizer: AdamW {
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                weight_decay: cfg.weight_decay,
                ..AdamW::default()
            },
            weights: LossWeights::new(cfg.lambda_fft)?,
            state,
            cfg,
            sampler,
            validation: None,
            logger: None,
            history: Vec::new(),
        })
    }

    pub fn with_validation(mut self, dataset: Arc<Dataset>) -> Self {
        self.validation = Some(dataset);
        self
    }

    pub fn with_logger(mut self, logger: impl FnMut(&str) + Send + 'static) -> Self {
        self.logger = Some(Box::new(logger));
        self
    }

    pub fn state(&self) -> &Checkpoint<E> {
        &self.state
    }

    pub fn into_state(self) -> Checkpoint<E> {
        self.state
    }

    pub fn history(&self) -> &[StepRecord] {
        &self.history
    }

    pub fn sampler(&self) -> &BatchSampler {
        &self.sampler
    }

    fn log(&mut self, line: &str) {
        if let Some(l) = self.logger.as_mut() {
            l(line);
        }
    }

    /// One update on the given batch at the current iteration's learning
    /// rate.
    pub fn step_on(&mut self, inputs: &Tensor<E>, targets: &Tensor<E>) -> Result<StepRecord> {
        let i = self.state.iteration;
        if i >= self.cfg.total_iterations {
            return Err(Error::InvalidArgument(format!("run already finished at iteration {i}")));
        }
        let lr = cosine_lr(i, &self.cfg)?;
        let outcome = self.forward_backward(inputs, targets);
        let (loss, grads) = match outcome {
            Err(Error::Tensor(TensorError::NonFinite { .. })) => {
                let dump = self.dump_batch(inputs, targets)?;
                return Err(Error::NonFiniteLoss { iteration: i, dump });
            }
            other => other?,
        };
        if !loss.total.is_finite() {
            let dump = self.dump_batch(inputs, targets)?;
            return Err(Error::NonFiniteLoss { iteration: i, dump });
        }
        let params = self.state.model.params_mut();
        self.optimizer.step(params, &grads, &mut self.state.optimizer, lr)?;
        self.state.iteration += 1;
        self.state.next_batch += 1;
        let record = StepRecord {
            iteration: self.state.iteration,
            lr,
            loss,
        };
        self.history.push(record);
        Ok(record)
    }

    #[allow(clippy::type_complexity)]
    fn forward_backward(&self, inputs: &Tensor<E>, targets: &Tensor<E>) -> Result<(LossValues, Vec<Option<Vec<E>>>)> {
        let model = &self.state.model;
        let mut g = Graph::new();
        let bound = model.bind(&mut g, true)?;
        let x = g.constant(inputs.detached())?;
        let t = g.constant(targets.detached())?;
        let y = model.forward_graph(&mut g, &bound, x, None)?;
        let loss = total_loss(&mut g, y, t, self.weights)?;
        let values = loss.values(&g);
        g.backward(loss.total)?;
        let grads = bound.vars.iter().map(|&v| g.take_grad(v)).collect();
        Ok((values, grads))
    }

    fn dump_dir(&self) -> PathBuf {
        self.cfg.checkpoint_dir.clone().unwrap_or_else(std::env::temp_dir)
    }

    /// Writes the batch as clamped PGMs under `nonfinite_iter<N>/`.
    fn dump_batch(&self, inputs: &Tensor<E>, targets: &Tensor<E>) -> Result<PathBuf> {
        let dir = self.dump_dir().join(format!("nonfinite_iter{:08}", self.state.iteration));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (kind, t) in [("input", inputs), ("target", targets)] {
            let (n, _, h, w) = t.dims4("dump_batch")?;
            for (k, plane) in t.data().chunks(h * w).take(n).enumerate() {
                let values = plane.iter().map(|v| {
                    let v = v.to_f64();
                    if v.is_nan() {
                        0.0
                    } else {
                        v
                    }
                });
                GrayImage::from_clamped(h, w, values)?.save(dir.join(format!("{kind}_{k:03}.pgm")))?;
            }
        }
        Ok(dir)
    }

    /// Trains until `until` iterations are complete (capped at the run
    /// length), logging, validating and checkpointing on the way.
    pub fn run_until(&mut self, until: u64) -> Result<()> {
        let until = until.min(self.cfg.total_iterations);
        if self.state.iteration >= until {
            return Ok(());
        }
        let start = self.state.next_batch;
        let end = start + (until - self.state.iteration);
        let mut prefetch = Prefetcher::<E>::spawn(self.sampler.clone(), start, end, DEFAULT_QUEUE_DEPTH);
        while self.state.iteration < until {
            let (index, batch) = prefetch
                .next_batch()
                .ok_or_else(|| Error::Dataset("batch producer stopped early".into()))?;
            debug_assert_eq!(index, self.state.next_batch);
            let (inputs, targets) = batch?;
            let record = self.step_on(&inputs, &targets)?;
            let n = record.iteration;
            if n % self.cfg.log_interval == 0 || n == self.cfg.total_iterations {
                self.log(&record.log_line());
            }
            if self.cfg.validation_interval > 0 && n % self.cfg.validation_interval == 0 {
                self.validate()?;
            }
            if self.cfg.checkpoint_interval > 0 && n % self.cfg.checkpoint_interval == 0 && n != self.cfg.total_iterations {
                self.write_checkpoint(&format!("ckpt_{n:08}.bin"))?;
            }
        }
        if self.state.iteration == self.cfg.total_iterations {
            self.write_checkpoint("final.bin")?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        self.run_until(self.cfg.total_iterations)
    }

    fn validate(&mut self) -> Result<()> {
        let Some(val) = self.validation.clone() else {
            return Ok(());
        };
        let report = evaluate(&self.state.model, &val, InputMode::Halftone)?;
        let line = format!(
            "val iter={} psnr={} ssim={}",
            self.state.iteration,
            report.mean_psnr(),
            report.mean_ssim()
        );
        self.log(&line);
        Ok(())
    }

    fn write_checkpoint(&mut self, file: &str) -> Result<()> {
        let Some(dir) = self.cfg.checkpoint_dir.clone() else {
            return Ok(());
        };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(file);
        self.state.save(&path)?;
        self.log(&format!("checkpoint {}", path.display()));
        Ok(())
    }
}

/// Builds a fresh model from `model` and trains it for the full run.
pub fn train<E: Element>(model: MsprlModel<E>, dataset: Arc<Dataset>, cfg: &TrainConfig) -> Result<Checkpoint<E>> {
    let mut trainer = Trainer::new(Checkpoint::initial(model, cfg.seed), dataset, cfg.clone())?;
    trainer.run()?;
    Ok(trainer.into_state())
}

/// Centered moving average with window `w` (truncated at the ends).
pub fn smooth(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(w / 2);
            let hi = (i + w - w / 2).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Mean of the first and last tenth of a loss trajectory.
pub fn decile_means(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len() / 10;
    if n == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&values[..n]), mean(&values[values.len() - n..])))
}

