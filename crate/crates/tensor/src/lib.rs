//! Dense tensors and a tape-based reverse-mode differentiation graph with
//! the operators needed by multiscale image restoration networks:
//! convolution, rectifier/GELU activations, channel concatenation, pixel
//! (un)shuffle, bilinear resizing and a 2-D FFT.

pub mod element;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod tensor;

pub use element::{DType, Element};
pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use ops::activation::Activation;
pub use tensor::Tensor;
