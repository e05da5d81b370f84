use rayon::prelude::*;

use super::MetricError;
use crate::geom::{PointCloud, SpatialIndex};

/// Neighbour count of the MSE metric.
pub const DEFAULT_MSE_NEIGHBORS: usize = 10;

fn mean_nearest(from: &PointCloud, to: &SpatialIndex) -> f64 {
    let d: Vec<f64> = from.points().par_iter().map(|p| to.nearest(p).1).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Symmetric mean of squared nearest-neighbour distances.
pub fn chamfer_distance(filtered: &PointCloud, gt: &PointCloud) -> Result<f64, MetricError> {
    if filtered.is_empty() || gt.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let fi = SpatialIndex::build(filtered)?;
    let gi = SpatialIndex::build(gt)?;
    Ok(mean_nearest(gt, &fi) + mean_nearest(filtered, &gi))
}

/// Mean over ground-truth points of the mean squared distance to their `n`
/// nearest filtered points.
pub fn mse_metric(filtered: &PointCloud, gt: &PointCloud, n: usize) -> Result<f64, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    if n == 0 || filtered.len() < n {
        return Err(MetricError::TooFewPoints {
            need: n.max(1),
            got: filtered.len(),
        });
    }
    let fi = SpatialIndex::build(filtered)?;
    let per_point: Vec<f64> = gt
        .points()
        .par_iter()
        .map(|p| {
            let nn = fi.knn_with_dist2(p, n).expect("n checked against cloud size");
            nn.iter().map(|&(_, d)| d).sum::<f64>() / n as f64
        })
        .collect();
    Ok(per_point.iter().sum::<f64>() / per_point.len() as f64)
}
