use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use msprl_tensor::{Element, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::halftone::floyd_steinberg;
use crate::image::{GrayImage, HalftoneImage};

pub const DEFAULT_QUEUE_DEPTH: usize = 4;

/// Uniformly placed `size×size` crop.
pub fn sample_patch<R: Rng + ?Sized>(image: &GrayImage, size: usize, rng: &mut R) -> Result<GrayImage> {
    if size == 0 || image.height() < size || image.width() < size {
        return Err(Error::InvalidImage(format!(
            "cannot crop {size}x{size} from {}x{}",
            image.height(),
            image.width()
        )));
    }
    let top = rng.gen_range(0..=image.height() - size);
    let left = rng.gen_range(0..=image.width() - size);
    image.crop(top, left, size, size)
}

/// Horizontal mirror with probability one half.
pub fn augment_flip<R: Rng + ?Sized>(patch: GrayImage, rng: &mut R) -> GrayImage {
    if rng.gen_bool(0.5) {
        patch.flip_horizontal()
    } else {
        patch
    }
}

/// Stacks patches into `(halftone inputs, continuous targets)`, both
/// `N×1×h×w`, index-aligned.
pub fn make_batch<E: Element>(
    patches: &[GrayImage],
    halftoner: impl Fn(&GrayImage) -> HalftoneImage,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty patch list".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut inputs = Vec::with_capacity(patches.len() * h * w);
    let mut targets = Vec::with_capacity(patches.len() * h * w);
    for p in patches {
        if (p.height(), p.width()) != (h, w) {
            return Err(Error::SizeMismatch(format!(
                "ragged batch: {}x{} next to {h}x{w}",
                p.height(),
                p.width()
            )));
        }
        let ht = halftoner(p);
        inputs.extend(ht.pixels().iter().map(|&b| if b == 1 { E::ONE } else { E::ZERO }));
        targets.extend(p.pixels().iter().map(|&v| E::from_f64(v)));
    }
    let shape = [patches.len(), 1, h, w];
    Ok((Tensor::from_vec(shape, inputs)?, Tensor::from_vec(shape, targets)?))
}

/// Random stream for batch `index`. Batches are independent of each other,
/// so they can be produced ahead or out of order without changing results.
pub fn batch_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws training batches: image choice, crop, flip, then halftone.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    dataset: Arc<Dataset>,
    pub batch_size: usize,
    pub patch_size: usize,
    pub seed: u64,
}

impl BatchSampler {
    pub fn new(dataset: Arc<Dataset>, batch_size: usize, patch_size: usize, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Dataset("no images in the training pool".into()));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if let Some(min) = dataset.min_side() {
            if min < patch_size {
                return Err(Error::Dataset(format!(
                    "smallest image side {min} is below the patch size {patch_size}"
                )));
            }
        }
        Ok(Self {
            dataset,
            batch_size,
            patch_size,
            seed,
        })
    }

    pub fn patches(&self, index: u64) -> Result<Vec<GrayImage>> {
        let mut rng = batch_rng(self.seed, index);
        (0..self.batch_size)
            .map(|_| {
                let i = rng.gen_range(0..self.dataset.len());
                let patch = sample_patch(self.dataset.image(i), self.patch_size, &mut rng)?;
                Ok(augment_flip(patch, &mut rng))
            })
            .collect()
    }

    pub fn batch<E: Element>(&self, index: u64) -> Result<(Tensor<E>, Tensor<E>)> {
        make_batch(&self.patches(index)?, floyd_steinberg)
    }
}

/// Background producer of batches `start..end` over a bounded channel.
pub struct Prefetcher<E: Element> {
    rx: Receiver<(u64, Result<(Tensor<E>, Tensor<E>)>)>,
    handle: Option<JoinHandle<()>>,
}

impl<E: Element> Prefetcher<E> {
    pub fn spawn(sampler: BatchSampler, start: u64, end: u64, depth: usize) -> Self {
        let (tx, rx) = mpsc::sync_channel(depth.max(1));
        let handle = thread::spawn(move || {
            for i in start..end {
                if tx.send((i, sampler.batch(i))).is_err() {
                    break;
                }
            }
        });
        Self {
            rx,
            handle: Some(handle),
        }
    }

    /// Next batch in index order.
    pub fn next_batch(&mut self) -> Option<(u64, Result<(Tensor<E>, Tensor<E>)>)> {
        self.rx.recv().ok()
    }
}

impl<E: Element> Drop for Prefetcher<E> {
    fn drop(&mut self) {
        // Unblock the producer by dropping the receiver first.
        let (_tx, rx) = mpsc::sync_channel(1);
        drop(std::mem::replace(&mut self.rx, rx));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
