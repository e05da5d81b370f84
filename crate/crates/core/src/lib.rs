//! Multi-offset point cloud denoising.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`]: point clouds, the kd-tree, PCA frames and multi-scale patch extraction.
//! * [`shapes`]: procedural meshes, area-uniform surface sampling and noise models.
//! * [`autodiff`]: a small dense reverse-mode engine with exactly the operators the
//!   network needs.
//! * [`model`]: the three patch encoders, the multi-scale perception module and the
//!   multi-offset decoder, plus whole-cloud inference.
//! * [`loss`]: the feature-preserving projection/repulsion objective.
//! * [`metrics`]: Chamfer distance, k-NN mean-square error and point-to-mesh distance.
//! * [`train`]: datasets, the SGD loop, the learning-rate schedule and checkpoints.
//! * [`verify`]: finite-difference gradient suites used by tests and the CLI.

pub mod autodiff;
pub mod geom;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod shapes;
pub mod train;
pub mod verify;

mod error;

pub use error::{Error, Result};

/// 3-vector in model or patch units.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix, used for rotations and covariances.
pub type Mat3 = nalgebra::Matrix3<f64>;
