//! Held-out evaluation of restorers.

use msprl_tensor::Element;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::halftone::{floyd_steinberg, gaussian_baseline, DEFAULT_SIGMA};
use crate::image::{GrayImage, HalftoneImage};
use crate::metrics::{psnr, ssim, MetricRecord, MetricReport};
use crate::net::MsprlModel;

/// Anything that maps a degraded image back to continuous tone.
pub trait Restorer: Sync {
    fn restore(&self, input: &GrayImage) -> Result<GrayImage>;
}

impl<E: Element> Restorer for MsprlModel<E> {
    fn restore(&self, input: &GrayImage) -> Result<GrayImage> {
        MsprlModel::restore(self, input)
    }
}

/// Gaussian low-pass of the halftone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianRestorer {
    pub sigma: f64,
}

impl Default for GaussianRestorer {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

impl Restorer for GaussianRestorer {
    fn restore(&self, input: &GrayImage) -> Result<GrayImage> {
        gaussian_baseline(&HalftoneImage::from_gray(input)?, self.sigma)
    }
}

/// Returns its input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentityRestorer;

impl Restorer for IdentityRestorer {
    fn restore(&self, input: &GrayImage) -> Result<GrayImage> {
        Ok(input.clone())
    }
}

/// What the restorer is fed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InputMode {
    /// The Floyd–Steinberg halftone of each image.
    #[default]
    Halftone,
    /// The original image itself.
    GroundTruth,
}

/// Scores `restorer` on every image of `dataset`. Images whose sides are
/// not multiples of 4 are center-cropped first.
pub fn evaluate<R: Restorer + ?Sized>(restorer: &R, dataset: &Dataset, mode: InputMode) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::Dataset("no images to evaluate".into()));
    }
    let records = dataset
        .entries()
        .par_iter()
        .map(|entry| {
            let original = &entry.image;
            let (reference, cropped_from) = match original.center_crop_to_multiple(4)? {
                Some(c) => (c, Some((original.height(), original.width()))),
                None => (original.clone(), None),
            };
            let input = match mode {
                InputMode::Halftone => floyd_steinberg(&reference).to_gray(),
                InputMode::GroundTruth => reference.clone(),
            };
            let restored = restorer.restore(&input)?;
            let restored = GrayImage::from_clamped(restored.height(), restored.width(), restored.pixels().iter().copied())?;
            Ok(MetricRecord {
                path: entry.path.clone(),
                psnr_db: psnr(&restored, &reference)?,
                ssim: ssim(&restored, &reference)?,
                cropped_from,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { records })
}
