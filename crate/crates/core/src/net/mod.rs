//! The multiscale progressively residual restoration network.

pub mod blocks;
mod config;
mod features;
mod model;
mod params;

pub use config::{ModelConfig, LEVELS};
pub use features::{capture, dump_feature_maps, Block, FeatureRecorder, LayerSelector};
pub use model::MsprlModel;
pub use params::{Bound, ParamStore, Parameter};
