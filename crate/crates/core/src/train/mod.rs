//! Dataset assembly, the SGD training loop, and checkpoint persistence.

mod checkpoint;
mod config;
mod dataset;
mod fit;

pub use checkpoint::{checkpoint_digest, config_digest, load_checkpoint, save_checkpoint, write_checkpoint, read_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{lr_schedule, TrainConfig};
pub use dataset::{build_dataset, synthesize_dataset, Dataset, DatasetEntry, NoisyCloud, Split, TRAIN_NOISE_GRID};
pub use fit::{prepare_patch, train, train_epoch, train_step, EpochStats, IndexedDataset, StepLog, LOG_HEADER};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::geom::GeomError;
use crate::loss::{LossBreakdown, LossError};
use crate::model::ModelError;
use crate::shapes::ShapeError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("epoch {epoch} out of range for {epochs} epochs")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no usable training patches in epoch {0}")]
    NoPatches(usize),
    #[error("non-finite loss at epoch {epoch} step {step}: {breakdown:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        breakdown: Box<LossBreakdown>,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint does not match the model config\ncheckpoint:\n{found}\nconfig:\n{expected}")]
    DimensionMismatch { found: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
