//! Evaluation metrics: Chamfer distance, k-nearest mean squared error, and
//! point-to-mesh distance. All values are in squared model units.

mod bvh;
mod cloud;
mod triangle;

pub use bvh::TriangleBvh;
pub use cloud::{chamfer_distance, mse_metric, DEFAULT_MSE_NEIGHBORS};
pub use triangle::{closest_point_on_triangle, point_triangle_distance, point_triangle_distance2};

use thiserror::Error;

use crate::geom::{GeomError, PointCloud};
use crate::shapes::TriMesh;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("filtered cloud has {got} points, need at least {need}")]
    TooFewPoints { need: usize, got: usize },
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("empty mesh")]
    EmptyMesh,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// One evaluation row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub n_filtered: usize,
    pub n_gt: usize,
    pub cd: f64,
    pub mse: f64,
    pub p2m: Option<f64>,
}

impl MetricReport {
    pub fn compute(filtered: &PointCloud, gt: &PointCloud, mesh: Option<&TriMesh>) -> Result<Self, MetricError> {
        Ok(Self {
            n_filtered: filtered.len(),
            n_gt: gt.len(),
            cd: chamfer_distance(filtered, gt)?,
            mse: mse_metric(filtered, gt, DEFAULT_MSE_NEIGHBORS)?,
            p2m: mesh.map(|m| p2m_metric(filtered, m)).transpose()?,
        })
    }
}

/// Mean squared distance from each filtered point to the nearest mesh triangle.
pub fn p2m_metric(filtered: &PointCloud, mesh: &TriMesh) -> Result<f64, MetricError> {
    if filtered.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let bvh = TriangleBvh::build(mesh)?;
    let d: Vec<f64> = {
        use rayon::prelude::*;
        filtered.points().par_iter().map(|p| bvh.nearest_distance2(p)).collect()
    };
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}
