//! The multi-offset denoising network: per-scale patch encoders, the
//! multi-scale perception module, the multi-offset decoder, and whole-cloud
//! inference.

mod batch;
mod config;
mod denoise;
mod net;

pub use batch::PatchBatch;
pub use config::ModelConfig;
pub use denoise::{denoise_cloud, write_weights, DenoiseConfig, DenoiseOutput, ISOLATED_WEIGHT};
pub use net::{ForwardOutput, ForwardVars, ModNet};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::geom::GeomError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("patch batch is empty")]
    EmptyBatch,
    #[error("scale {scale} input has shape {got:?}, expected [batch, {n_patch}, 3]")]
    InputShape {
        scale: usize,
        got: Vec<usize>,
        n_patch: usize,
    },
    #[error("scales disagree on batch size: {0:?}")]
    BatchMismatch([usize; 3]),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("parameter {0} missing from store")]
    MissingParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
