//! The audio/text keyword matcher, its training loop and checkpoints.

mod checkpoint;
mod config;
mod network;
mod train;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

pub use checkpoint::{Checkpoint, NamedTensor, MAGIC, VERSION};
pub use config::{ModelConfig, TextSource};
pub use network::Model;
pub use train::{
    evaluate, history_csv, split_validation, train, train_manifest, EpochStats, Evaluation, TrainOutcome,
    HISTORY_HEADER,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training set contains only label {0}; both classes are required")]
    DegenerateDataset(u8),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {0}: {1}")]
    Io(PathBuf, #[source] io::Error),
}
