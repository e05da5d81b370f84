use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::{ShapeError, TriMesh};
use crate::Vec3;

/// A procedural shape and its dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeSpec {
    Cube { edge: f64 },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    Torus { major: f64, minor: f64 },
    Icosahedron { radius: f64 },
}

impl ShapeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cube { .. } => "cube",
            Self::Sphere { .. } => "sphere",
            Self::Cylinder { .. } => "cylinder",
            Self::Torus { .. } => "torus",
            Self::Icosahedron { .. } => "icosahedron",
        }
    }

    /// Resolution giving a few thousand triangles for curved shapes.
    pub fn default_resolution(&self) -> u32 {
        match self {
            Self::Cube { .. } | Self::Icosahedron { .. } => 1,
            Self::Sphere { .. } => 4,
            Self::Cylinder { .. } | Self::Torus { .. } => 6,
        }
    }

    fn dimensions(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Self::Cube { edge } => vec![("edge", edge)],
            Self::Sphere { radius } | Self::Icosahedron { radius } => vec![("radius", radius)],
            Self::Cylinder { radius, height } => vec![("radius", radius), ("height", height)],
            Self::Torus { major, minor } => vec![("major", major), ("minor", minor)],
        }
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a shape name with default dimensions (`cube`, `sphere`, ...).
impl FromStr for ShapeSpec {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "cube" => Self::Cube { edge: 2.0 },
            "sphere" => Self::Sphere { radius: 1.0 },
            "cylinder" => Self::Cylinder {
                radius: 0.7,
                height: 1.6,
            },
            "torus" => Self::Torus {
                major: 1.0,
                minor: 0.35,
            },
            "icosahedron" => Self::Icosahedron { radius: 1.2 },
            other => return Err(ShapeError::UnknownShape(other.to_string())),
        })
    }
}

/// Generates a watertight, outward-wound triangulation.
///
/// `resolution` subdivides cube faces into n x n quads, refines the sphere
/// `n` times from an icosahedron, and sets the cylinder and torus segment
/// counts. The icosahedron ignores it.
pub fn gen_shape(spec: &ShapeSpec, resolution: u32) -> Result<TriMesh, ShapeError> {
    if resolution == 0 {
        return Err(ShapeError::BadResolution);
    }
    for (name, value) in spec.dimensions() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ShapeError::BadDimension { name, value });
        }
    }
    let n = resolution as usize;
    let (vertices, triangles) = match *spec {
        ShapeSpec::Cube { edge } => cube(edge, n),
        ShapeSpec::Sphere { radius } => icosphere(radius, n),
        ShapeSpec::Icosahedron { radius } => icosphere(radius, 0),
        ShapeSpec::Cylinder { radius, height } => cylinder(radius, height, n),
        ShapeSpec::Torus { major, minor } => {
            if minor >= major {
                return Err(ShapeError::BadDimension {
                    name: "major - minor",
                    value: major - minor,
                });
            }
            torus(major, minor, n)
        }
    };
    TriMesh::new(vertices, triangles)
}

type Geometry = (Vec<Vec3>, Vec<[usize; 3]>);

fn cube(edge: f64, n: usize) -> Geometry {
    let mut ids: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |lattice: [usize; 3]| -> usize {
        *ids.entry(lattice).or_insert_with(|| {
            vertices.push(Vec3::from_fn(|a, _| edge * (lattice[a] as f64 / n as f64 - 0.5)));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(12 * n * n);
    for axis in 0..3 {
        // (axis, u, v) is a right-handed cyclic permutation, so u x v = +axis
        let (u_axis, v_axis) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            for i in 0..n {
                for j in 0..n {
                    let at = |di: usize, dj: usize| {
                        let mut l = [0; 3];
                        l[axis] = side;
                        l[u_axis] = i + di;
                        l[v_axis] = j + dj;
                        l
                    };
                    let q = [vertex(at(0, 0)), vertex(at(1, 0)), vertex(at(1, 1)), vertex(at(0, 1))];
                    if side == n {
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    } else {
                        triangles.push([q[0], q[2], q[1]]);
                        triangles.push([q[0], q[3], q[2]]);
                    }
                }
            }
        }
    }
    (vertices, triangles)
}

fn icosphere(radius: f64, levels: usize) -> Geometry {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    (vertices, triangles)
}

fn cylinder(radius: f64, height: f64, n: usize) -> Geometry {
    let segments = (8 * n).max(3);
    let rings = n;
    let mut vertices = Vec::with_capacity(segments * (rings + 1) + 2);
    for r in 0..=rings {
        let z = height * (r as f64 / rings as f64 - 0.5);
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    let ring = |r: usize, s: usize| r * segments + s % segments;
    let mut triangles = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, -height / 2.0));
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, height / 2.0));
    for s in 0..segments {
        triangles.push([bottom, ring(0, s + 1), ring(0, s)]);
        triangles.push([top, ring(rings, s), ring(rings, s + 1)]);
    }
    (vertices, triangles)
}

fn torus(major: f64, minor: f64, n: usize) -> Geometry {
    let nu = 12 * n;
    let nv = (6 * n).max(3);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let w = major + minor * v.cos();
            vertices.push(Vec3::new(w * u.cos(), w * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + j % nv;
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    (vertices, triangles)
}
