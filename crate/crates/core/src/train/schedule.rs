use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::config::TrainConfig;

/// Single-cycle cosine decay from `lr_start` at 0 to `lr_end` at
/// `total_iterations`.
pub fn cosine_lr(iter: u64, cfg: &TrainConfig) -> Result<f64> {
    if iter > cfg.total_iterations {
        return Err(Error::InvalidArgument(format!(
            "iteration {iter} outside schedule of {} iterations",
            cfg.total_iterations
        )));
    }
    if cfg.total_iterations == 0 {
        return Ok(cfg.lr_start);
    }
    let t = iter as f64 / cfg.total_iterations as f64;
    Ok(cfg.lr_end + 0.5 * (cfg.lr_start - cfg.lr_end) * (1.0 + (PI * t).cos()))
}
