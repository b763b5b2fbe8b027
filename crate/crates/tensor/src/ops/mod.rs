//! Forward and backward kernels on raw buffers. The [`Graph`](crate::Graph)
//! records which kernel produced each value and dispatches the matching
//! backward rule.

pub mod activation;
pub mod conv;
pub mod fft;
pub mod resize;
pub mod shuffle;
