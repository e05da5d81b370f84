use rand::Rng;

use super::{ShapeError, TriMesh};
use crate::geom::PointCloud;

/// Draws `n` area-uniform surface samples, each carrying its face normal.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriMesh, n: usize, rng: &mut R) -> Result<PointCloud, ShapeError> {
    if mesh.is_empty() {
        return Err(ShapeError::EmptyMesh);
    }
    if n == 0 {
        return Err(ShapeError::ZeroSamples);
    }
    let cumulative: Vec<f64> = (0..mesh.triangles().len())
        .scan(0.0, |acc, t| {
            *acc += mesh.triangle_area(t);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("mesh is non-empty");
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let t = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(t);
        let s = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        normals.push(mesh.face_normals()[t]);
    }
    Ok(PointCloud::with_normals(points, normals).expect("face normals are unit length"))
}
