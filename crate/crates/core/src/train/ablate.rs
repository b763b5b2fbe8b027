//! The SFE × FF ablation grid.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use msprl_tensor::Element;

use super::config::RunConfig;
use super::evaluate::{evaluate, InputMode};
use super::checkpoint::Checkpoint;
use super::trainer::Trainer;
use crate::data::Dataset;
use crate::error::Result;
use crate::image::write_atomic;
use crate::net::{ModelConfig, MsprlModel};

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub enable_sfe: bool,
    pub enable_ff: bool,
    pub parameters: usize,
    pub final_loss: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Header `sfe,ff,parameters,final_loss,psnr_db,ssim`, one row per
    /// configuration with flags written as 0/1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sfe,ff,parameters,final_loss,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                u8::from(r.enable_sfe),
                u8::from(r.enable_ff),
                r.parameters,
                r.final_loss,
                r.psnr_db,
                r.ssim
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// The four `(enable_sfe, enable_ff)` settings, full model first.
pub const GRID: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];

/// Trains every grid configuration from the same seed and scores each on
/// `eval`.
pub fn ablate<E: Element>(
    base: &RunConfig,
    train_set: Arc<Dataset>,
    eval: &Dataset,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(GRID.len());
    for (enable_sfe, enable_ff) in GRID {
        let config = ModelConfig {
            enable_sfe,
            enable_ff,
            ..base.model.clone()
        };
        let model = MsprlModel::<E>::new(config)?;
        let parameters = model.count_parameters();
        let mut trainer = Trainer::new(
            Checkpoint::initial(model, base.train.seed),
            train_set.clone(),
            base.train.clone(),
        )?;
        trainer.run()?;
        let final_loss = trainer.history().last().map_or(f64::NAN, |r| r.loss.total);
        let state = trainer.into_state();
        let report = evaluate(&state.model, eval, InputMode::Halftone)?;
        let row = AblationRow {
            enable_sfe,
            enable_ff,
            parameters,
            final_loss,
            psnr_db: report.mean_psnr(),
            ssim: report.mean_ssim(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationReport { rows })
}
