//! Optimization, checkpoints and evaluation.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use ablate::{ablate, AblationReport, AblationRow, GRID};
pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use config::{ConfigError, RunConfig, TrainConfig};
pub use evaluate::{evaluate, GaussianRestorer, IdentityRestorer, InputMode, Restorer};
pub use optim::{AdamW, OptimizerState, ADAM_EPS};
pub use schedule::cosine_lr;
pub use trainer::{decile_means, smooth, train, StepRecord, Trainer};
