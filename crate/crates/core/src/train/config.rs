//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DEFAULT_MIN_SIDE;
use crate::error::{Error, Result};
use crate::net::ModelConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("line {line}: `{key}` set twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Invariant(String),
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Zero means "no updates": training returns the initial state.
    pub total_iterations: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub lambda_fft: f64,
    pub seed: u64,
    /// Iterations between validation passes; 0 disables validation.
    pub validation_interval: u64,
    /// Iterations between periodic checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub log_interval: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Training images with a shorter side are skipped.
    pub min_side: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iterations: 300_000,
            batch_size: 16,
            patch_size: 128,
            lr_start: 2e-4,
            lr_end: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            lambda_fft: 0.1,
            seed: 0,
            validation_interval: 5000,
            checkpoint_interval: 10_000,
            log_interval: 100,
            checkpoint_dir: None,
            min_side: DEFAULT_MIN_SIDE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invariant(m.to_string()));
        if !(self.lr_end > 0.0 && self.lr_start > self.lr_end && self.lr_start.is_finite()) {
            return fail("learning rates must satisfy lr_start > lr_end > 0");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.patch_size == 0 || self.patch_size % 4 != 0 {
            return fail("patch_size must be a positive multiple of 4");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be >= 0");
        }
        if !(self.lambda_fft >= 0.0 && self.lambda_fft.is_finite()) {
            return fail("lambda_fft must be >= 0");
        }
        if self.log_interval == 0 {
            return fail("log_interval must be at least 1");
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("total_iterations", self.total_iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("lr_start", self.lr_start.to_string()),
            ("lr_end", self.lr_end.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("lambda_fft", self.lambda_fft.to_string()),
            ("seed", self.seed.to_string()),
            ("validation_interval", self.validation_interval.to_string()),
            ("checkpoint_interval", self.checkpoint_interval.to_string()),
            ("log_interval", self.log_interval.to_string()),
            ("min_side", self.min_side.to_string()),
        ];
        if let Some(dir) = &self.checkpoint_dir {
            e.push(("checkpoint_dir", dir.display().to_string()));
        }
        e
    }

    /// Returns `Ok(false)` for keys that are not training settings.
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, ()> {
        fn p<T: std::str::FromStr>(v: &str) -> std::result::Result<T, ()> {
            v.parse().map_err(|_| ())
        }
        match key {
            "total_iterations" => self.total_iterations = p(value)?,
            "batch_size" => self.batch_size = p(value)?,
            "patch_size" => self.patch_size = p(value)?,
            "lr_start" => self.lr_start = p(value)?,
            "lr_end" => self.lr_end = p(value)?,
            "beta1" => self.beta1 = p(value)?,
            "beta2" => self.beta2 = p(value)?,
            "weight_decay" => self.weight_decay = p(value)?,
            "lambda_fft" => self.lambda_fft = p(value)?,
            "seed" => self.seed = p(value)?,
            "validation_interval" => self.validation_interval = p(value)?,
            "checkpoint_interval" => self.checkpoint_interval = p(value)?,
            "log_interval" => self.log_interval = p(value)?,
            "min_side" => self.min_side = p(value)?,
            "checkpoint_dir" => self.checkpoint_dir = Some(PathBuf::from(value)),
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Training plus architecture settings, as read from one config file.
///
/// `seed` drives both parameter initialization and batch sampling.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let (key, value) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == key) {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            seen.push(key.to_string());
            let invalid = || ConfigError::InvalidValue {
                line,
                key: key.into(),
                value: value.into(),
            };
            let known = match key {
                "seed" => {
                    let s: u64 = value.parse().map_err(|_| invalid())?;
                    cfg.train.seed = s;
                    cfg.model.seed = s;
                    true
                }
                _ => {
                    cfg.train.set(key, value).map_err(|_| invalid())?
                        || cfg.model.set(key, value).map_err(|_| invalid())?
                }
            };
            if !known {
                return Err(ConfigError::UnknownKey { line, key: key.into() });
            }
        }
        cfg.train.validate()?;
        cfg.model
            .validate()
            .map_err(|e| ConfigError::Invariant(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.train.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, v) in self.model.entries() {
            if k != "seed" {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}
