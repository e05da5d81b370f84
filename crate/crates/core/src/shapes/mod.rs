//! Procedural ground-truth meshes, surface sampling and additive noise models.

mod gen;
mod mesh;
mod noise;
mod sample;

pub use gen::{gen_shape, ShapeSpec};
pub use mesh::{parse_off, read_off, write_off, off_to_string, TriMesh};
pub use noise::{add_noise, NoiseModel, NoiseSpec};
pub use sample::sample_surface;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("shape dimension `{name}` must be positive, got {value}")]
    BadDimension { name: &'static str, value: f64 },
    #[error("resolution must be at least 1")]
    BadResolution,
    #[error("unknown shape `{0}` (expected cube, sphere, cylinder, torus or icosahedron)")]
    UnknownShape(String),
    #[error("unknown noise model `{0}` (expected gaussian, laplace, uniform or discrete)")]
    UnknownNoise(String),
    #[error("noise level must be nonnegative, got {0}")]
    BadNoiseLevel(f64),
    #[error("triangle {tri} references vertex {vertex}, mesh has {count} vertices")]
    IndexOutOfRange { tri: usize, vertex: usize, count: usize },
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("OFF line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
