//! Inverse halftoning with a multiscale progressively residual network.
//!
//! Grayscale images are halftoned with Floyd–Steinberg error diffusion and
//! restored by [`net::MsprlModel`], trained with an L1 + Fourier-domain loss.

pub mod data;
pub mod error;
pub mod halftone;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod train;

pub use error::{Error, Result};
pub use image::{GrayImage, HalftoneImage};
