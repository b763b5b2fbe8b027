use std::io;
use std::path::PathBuf;

use msprl_tensor::TensorError;
use thiserror::Error;

use crate::image::PgmError;
use crate::train::checkpoint::CheckpointError;
use crate::train::config::ConfigError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("invalid model configuration: {0}")]
    ModelConfig(String),
    #[error("unknown feature selector `{0}`")]
    Selector(String),
    #[error("non-finite loss at iteration {iteration}; offending batch written to {}", dump.display())]
    NonFiniteLoss { iteration: u64, dump: PathBuf },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
