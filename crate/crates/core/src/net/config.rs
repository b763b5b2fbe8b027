use std::fmt::Write as _;

use msprl_tensor::Activation;

use crate::error::{Error, Result};

/// Number of scales in the encoder/decoder. Fixed.
pub const LEVELS: usize = 3;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Feature width at the full-resolution level; deeper levels use 2C, 4C.
    pub base_channels: usize,
    /// Residual blocks in every encoder and decoder block.
    pub rb_per_block: usize,
    pub levels: usize,
    pub activation: Activation,
    /// Shallow feature extraction at levels 2 and 3.
    pub enable_sfe: bool,
    /// Concatenation + 1×1 fusion of encoder skips in the decoder.
    pub enable_ff: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 48,
            rb_per_block: 8,
            levels: LEVELS,
            activation: Activation::Relu,
            enable_sfe: true,
            enable_ff: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn tiny(base_channels: usize, rb_per_block: usize) -> Self {
        Self {
            base_channels,
            rb_per_block,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::ModelConfig("base_channels must be at least 1".into()));
        }
        if self.rb_per_block == 0 {
            return Err(Error::ModelConfig("rb_per_block must be at least 1".into()));
        }
        if self.levels != LEVELS {
            return Err(Error::ModelConfig(format!("levels must be {LEVELS}, got {}", self.levels)));
        }
        Ok(())
    }

    /// Channel width at `level` (1-based): C, 2C, 4C.
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << (level - 1)
    }

    /// `key = value` lines, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("base_channels", self.base_channels.to_string()),
            ("rb_per_block", self.rb_per_block.to_string()),
            ("levels", self.levels.to_string()),
            ("activation", self.activation.to_string()),
            ("enable_sfe", self.enable_sfe.to_string()),
            ("enable_ff", self.enable_ff.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys that
    /// are not model settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::ModelConfig(format!("invalid {what} `{value}`"));
        match key {
            "base_channels" => self.base_channels = value.parse().map_err(|_| bad(key))?,
            "rb_per_block" => self.rb_per_block = value.parse().map_err(|_| bad(key))?,
            "levels" => self.levels = value.parse().map_err(|_| bad(key))?,
            "activation" => self.activation = value.parse().map_err(|_| bad(key))?,
            "enable_sfe" => self.enable_sfe = parse_bool(value).ok_or_else(|| bad(key))?,
            "enable_ff" => self.enable_ff = parse_bool(value).ok_or_else(|| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::ModelConfig(format!("expected `key = value`, got `{line}`")))?;
            if !cfg.set(k.trim(), v.trim())? {
                return Err(Error::ModelConfig(format!("unknown key `{}`", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}
