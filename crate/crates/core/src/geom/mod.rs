//! Point clouds, spatial indexing and multi-scale patch preprocessing.

mod cloud;
mod io;
mod kdtree;
mod pca;
mod patch;

pub use cloud::{bbox_diagonal, PointCloud};
pub use io::{parse_xyz, read_xyz, write_xyz, xyz_to_string};
pub use kdtree::{dist2, SpatialIndex, DEFAULT_LEAF_SIZE};
pub use pca::{covariance, pca_rotation, symmetric_eigen, PcaFrame};
pub use patch::{
    extract_gt_patch, extract_multiscale_patch, resample_fixed, GroundTruthPatch,
    MultiScalePatch, PatchFrame, DEFAULT_N_PATCH, DEFAULT_RADII_FRAC, N_SCALES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("normals length {normals} does not match point count {points}")]
    NormalCount { points: usize, normals: usize },
    #[error("normal {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("query radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("k = {k} exceeds cloud size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("point index {index} out of range for cloud of {size} points")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("isolated point {0}: no neighbours within the largest patch radius")]
    IsolatedPoint(usize),
    #[error("patch radii must be positive and ascending, got {0:?}")]
    BadRadii([f64; 3]),
    #[error("patch size must be at least 1")]
    BadPatchSize,
    #[error("ground-truth cloud has no normals")]
    MissingNormals,
    #[error("no ground truth support within radius {radius} of the patch center")]
    NoGroundTruthSupport { radius: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
