use rand::seq::index;
use rand::Rng;

use super::{bbox_diagonal, pca_rotation, GeomError, PointCloud, SpatialIndex};
use crate::{Mat3, Vec3};

/// Number of concentric patch scales.
pub const N_SCALES: usize = 3;
/// Patch radii as fractions of the cloud's bounding-box diagonal.
pub const DEFAULT_RADII_FRAC: [f64; N_SCALES] = [0.03, 0.04, 0.05];
/// Fixed number of points per patch scale.
pub const DEFAULT_N_PATCH: usize = 400;

/// Similarity transform into a patch's normalized, aligned frame:
/// `q = R (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchFrame {
    pub center: Vec3,
    pub scale: f64,
    pub rotation: Mat3,
}

impl PatchFrame {
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation * (p - self.center) / self.scale
    }

    pub fn rotate(&self, n: &Vec3) -> Vec3 {
        self.rotation * n
    }

    /// Maps a displacement predicted in the local frame back to model units.
    pub fn offset_to_world(&self, d: &Vec3) -> Vec3 {
        self.rotation.transpose() * d * self.scale
    }

    pub fn to_world(&self, q: &Vec3) -> Vec3 {
        self.center + self.offset_to_world(q)
    }
}

/// Three fixed-size neighbourhoods of one noisy point in a shared local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScalePatch {
    /// Index of the query point in its cloud.
    pub index: usize,
    pub scale_points: [Vec<Vec3>; N_SCALES],
    pub pad_counts: [usize; N_SCALES],
    pub frame: PatchFrame,
    pub radii_frac: [f64; N_SCALES],
    /// Bounding-box diagonal of the source cloud (model units).
    pub diag: f64,
    /// PCA fallback was used (see [`pca_rotation`]).
    pub degenerate: bool,
}

impl MultiScalePatch {
    pub fn n_patch(&self) -> usize {
        self.scale_points[0].len()
    }

    pub fn center(&self) -> Vec3 {
        self.frame.center
    }
}

/// Ground-truth neighbourhood expressed in a [`MultiScalePatch`]'s frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPatch {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Bounding-box diagonal of `points` (normalized units).
    pub dobb: f64,
}

impl GroundTruthPatch {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        assert_eq!(points.len(), normals.len(), "one normal per point");
        let dobb = bbox_diagonal(&points);
        Self {
            points,
            normals,
            dobb,
        }
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }
}

/// Pads with origin points or uniformly downsamples to exactly `n` points.
///
/// Downsampling keeps the original relative order of the chosen points.
pub fn resample_fixed<R: Rng + ?Sized>(points: &[Vec3], n: usize, rng: &mut R) -> (Vec<Vec3>, usize) {
    if points.len() >= n {
        let mut chosen = index::sample(rng, points.len(), n).into_vec();
        chosen.sort_unstable();
        (chosen.into_iter().map(|i| points[i]).collect(), 0)
    } else {
        let pad = n - points.len();
        let mut out = Vec::with_capacity(n);
        out.extend_from_slice(points);
        out.resize(n, Vec3::zeros());
        (out, pad)
    }
}

fn subsample<R: Rng + ?Sized>(len: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    if len <= cap {
        (0..len).collect()
    } else {
        let mut chosen = index::sample(rng, len, cap).into_vec();
        chosen.sort_unstable();
        chosen
    }
}

fn check_radii(radii_frac: &[f64; N_SCALES]) -> Result<(), GeomError> {
    let ok = radii_frac[0] > 0.0 && radii_frac.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(GeomError::BadRadii(*radii_frac))
    }
}

/// Builds the three normalized, PCA-aligned patches around point `i`.
///
/// One rotation, computed from the largest-scale neighbourhood before
/// resampling, is shared by all scales. A point whose largest neighbourhood
/// contains nothing but itself is rejected as isolated.
pub fn extract_multiscale_patch<R: Rng + ?Sized>(
    cloud: &PointCloud,
    index: &SpatialIndex,
    i: usize,
    radii_frac: &[f64; N_SCALES],
    n_patch: usize,
    rng: &mut R,
) -> Result<MultiScalePatch, GeomError> {
    check_radii(radii_frac)?;
    if n_patch == 0 {
        return Err(GeomError::BadPatchSize);
    }
    let points = cloud.points();
    let center = *points.get(i).ok_or(GeomError::IndexOutOfRange {
        index: i,
        size: points.len(),
    })?;
    let diag = cloud.bbox_diag();
    if !(diag > 0.0) {
        return Err(GeomError::IsolatedPoint(i));
    }
    let r_max = radii_frac[N_SCALES - 1] * diag;
    let mut largest = index.radius_query(&center, r_max)?;
    // tree traversal order depends on the layout; resampling must not
    largest.sort_unstable();
    if largest.iter().all(|&j| points[j] == center) {
        return Err(GeomError::IsolatedPoint(i));
    }
    let centered: Vec<Vec3> = largest.iter().map(|&j| (points[j] - center) / r_max).collect();
    let pca = pca_rotation(&centered);
    let frame = PatchFrame {
        center,
        scale: r_max,
        rotation: pca.rotation,
    };

    let mut scale_points: [Vec<Vec3>; N_SCALES] = Default::default();
    let mut pad_counts = [0; N_SCALES];
    for k in 0..N_SCALES {
        let r_k = radii_frac[k] * diag;
        // neighbourhoods are nested, so filter the largest instead of querying again
        let local: Vec<Vec3> = largest
            .iter()
            .filter(|&&j| super::dist2(&points[j], &center) < r_k * r_k)
            .map(|&j| frame.to_local(&points[j]))
            .collect();
        let (pts, pad) = resample_fixed(&local, n_patch, rng);
        scale_points[k] = pts;
        pad_counts[k] = pad;
    }
    Ok(MultiScalePatch {
        index: i,
        scale_points,
        pad_counts,
        frame,
        radii_frac: *radii_frac,
        diag,
        degenerate: pca.degenerate,
    })
}

/// Clean points and normals within `r_frac * diag` of the patch center, mapped
/// into the patch frame and capped (never padded) at `m_max` points.
///
/// `diag` is the noisy cloud's diagonal stored in the patch, so scale `k` of
/// the ground truth uses exactly the radius of noisy scale `k`.
pub fn extract_gt_patch<R: Rng + ?Sized>(
    clean: &PointCloud,
    clean_index: &SpatialIndex,
    patch: &MultiScalePatch,
    r_frac: f64,
    m_max: usize,
    rng: &mut R,
) -> Result<GroundTruthPatch, GeomError> {
    let normals = clean.normals().ok_or(GeomError::MissingNormals)?;
    if m_max == 0 {
        return Err(GeomError::BadPatchSize);
    }
    let radius = r_frac * patch.diag;
    let support = clean_index.radius_query(&patch.frame.center, radius)?;
    if support.is_empty() {
        return Err(GeomError::NoGroundTruthSupport { radius });
    }
    let chosen = subsample(support.len(), m_max, rng);
    let points = clean.points();
    let (pts, ns): (Vec<Vec3>, Vec<Vec3>) = chosen
        .into_iter()
        .map(|c| {
            let j = support[c];
            (patch.frame.to_local(&points[j]), patch.frame.rotate(&normals[j]))
        })
        .unzip();
    Ok(GroundTruthPatch::new(pts, ns))
}
