//! Dense reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles together with
//! whatever the backward pass needs (normalized activations, argmax indices,
//! per-row Jacobians). [`Tape::backward`] walks the records in exact reverse
//! order and returns [`Gradients`] keyed by parameter; the caller folds them
//! into the [`ParamStore`] once the tape is dropped.
//!
//! Everything is `f64`. Every forward op checks its output for NaN/Inf and
//! fails with the op name.

mod gemm;
pub mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use ops::{Activation, BN_EPS, BN_MOMENTUM};
pub use params::{sgd_step, Gradients, ParamId, ParamStore, Parameter, RunningStatUpdate};
pub use tape::{Mode, OpKind, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor of shape {shape:?} needs {expected} values, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("batchnorm needs a batch of at least 2 in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("learning rate must be nonnegative and finite, got {0}")]
    BadLearningRate(f64),
    #[error("axis {axis} out of range for rank {rank}")]
    BadAxis { axis: usize, rank: usize },
    #[error("invalid segments for {rows} rows")]
    BadSegments { rows: usize },
}
