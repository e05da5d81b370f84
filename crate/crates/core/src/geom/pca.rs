use crate::{Mat3, Vec3};

/// Local frame from principal component analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaFrame {
    /// Maps centered points into the aligned frame (`q = R p`).
    pub rotation: Mat3,
    /// Set when fewer than two distinct points exist (rotation is then the
    /// identity) or when the points are collinear (second axis arbitrary).
    pub degenerate: bool,
}

/// Population covariance (divided by n) about the centroid.
pub fn covariance(points: &[Vec3]) -> Mat3 {
    if points.is_empty() {
        return Mat3::zeros();
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut c = Mat3::zeros();
    for p in points {
        let d = p - mean;
        c += d * d.transpose();
    }
    c / n
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the matrix whose columns are the matching unit
/// eigenvectors, unsorted.
pub fn symmetric_eigen(m: &Mat3) -> (Vec3, Mat3) {
    let mut a = *m;
    let mut v = Mat3::identity();
    let scale = a.abs().max().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off = a[(0, 1)].abs() + a[(0, 2)].abs() + a[(1, 2)].abs();
        if off <= 1e-17 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            // exact zero keeps later sweeps from chasing rounding noise
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    (Vec3::new(a[(0, 0)], a[(1, 1)], a[(2, 2)]), v)
}

fn fix_sign(mut axis: Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if axis[i].abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis = -axis;
    }
    axis
}

/// Rotation aligning the principal axes of `points` with the coordinate axes.
///
/// The first (largest-variance) axis maps to y, the second to x and the last
/// to z. Each axis is signed so its largest-magnitude component is
/// nonnegative; the z row is then flipped if needed to make det = +1.
pub fn pca_rotation(points: &[Vec3]) -> PcaFrame {
    let distinct = points.iter().any(|p| *p != points[0]);
    if points.len() < 2 || !distinct {
        return PcaFrame {
            rotation: Mat3::identity(),
            degenerate: true,
        };
    }
    let (values, vectors) = symmetric_eigen(&covariance(points));
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let first = fix_sign(vectors.column(order[0]).normalize());
    let second = fix_sign(vectors.column(order[1]).normalize());
    let third = fix_sign(vectors.column(order[2]).normalize());
    let mut rotation = Mat3::from_rows(&[second.transpose(), first.transpose(), third.transpose()]);
    if rotation.determinant() < 0.0 {
        rotation.set_row(2, &(-third).transpose());
    }
    let degenerate = values[order[1]] <= 1e-12 * values[order[0]];
    PcaFrame {
        rotation,
        degenerate,
    }
}
