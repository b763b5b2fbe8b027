//! Training and evaluation data: dataset listing, random patch sampling
//! with flips, on-the-fly halftone pairs and a bounded prefetch queue.

mod dataset;
mod sampler;
pub mod synth;

pub use dataset::{write_images, Dataset, DatasetEntry, DatasetSpec, Split, DEFAULT_MIN_SIDE};
pub use sampler::{augment_flip, batch_rng, make_batch, sample_patch, BatchSampler, Prefetcher, DEFAULT_QUEUE_DEPTH};
