use std::sync::OnceLock;

use super::GeomError;
use crate::{Mat3, Vec3};

/// Tolerance on normal length used when validating clouds.
const UNIT_TOL: f64 = 1e-9;

/// Ordered set of points with optional unit normals.
///
/// The bounding-box diagonal is computed on first use and cached.
#[derive(Debug, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    bbox_diag: OnceLock<f64>,
}

impl Clone for PointCloud {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            normals: self.normals.clone(),
            bbox_diag: self.bbox_diag.clone(),
        }
    }
}

impl PartialEq for PointCloud {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.normals == other.normals
    }
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            normals: None,
            bbox_diag: OnceLock::new(),
        }
    }

    /// Builds a cloud with normals; every normal must be unit length within 1e-9.
    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self, GeomError> {
        if normals.len() != points.len() {
            return Err(GeomError::NormalCount {
                points: points.len(),
                normals: normals.len(),
            });
        }
        if let Some((index, n)) = normals
            .iter()
            .enumerate()
            .find(|(_, n)| (n.norm() - 1.0).abs() > UNIT_TOL)
        {
            return Err(GeomError::NonUnitNormal {
                index,
                norm: n.norm(),
            });
        }
        Ok(Self {
            points,
            normals: Some(normals),
            bbox_diag: OnceLock::new(),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Drops the normals, keeping the points.
    pub fn without_normals(&self) -> Self {
        Self::new(self.points.clone())
    }

    /// Length of the axis-aligned bounding-box diagonal (0 for an empty cloud).
    pub fn bbox_diag(&self) -> f64 {
        *self.bbox_diag.get_or_init(|| bbox_diagonal(&self.points))
    }

    /// Applies `p -> rotation * p + translation`, rotating normals alongside.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| rotation * p + translation)
            .collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| (rotation * n).normalize()).collect());
        Self {
            points,
            normals,
            bbox_diag: OnceLock::new(),
        }
    }
}

/// Euclidean length of the axis-aligned bounding box of `points`.
pub fn bbox_diagonal(points: &[Vec3]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let (lo, hi) = points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (hi - lo).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_of_unit_cube_corners() {
        let cloud = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)]);
        assert!((cloud.bbox_diag() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit_normals() {
        let err = PointCloud::with_normals(vec![Vec3::zeros()], vec![Vec3::new(0.0, 0.0, 2.0)]);
        assert!(matches!(err, Err(GeomError::NonUnitNormal { index: 0, .. })));
        let err = PointCloud::with_normals(vec![Vec3::zeros()], vec![]);
        assert!(matches!(err, Err(GeomError::NormalCount { .. })));
    }
}
