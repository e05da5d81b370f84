use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ShapeError;
use crate::Vec3;

/// Indexed triangle mesh with per-face unit normals following the winding.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    face_normals: Vec<Vec3>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, ShapeError> {
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(ShapeError::IndexOutOfRange {
                    tri: t,
                    vertex: v,
                    count: vertices.len(),
                });
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            if !(norm > 0.0) {
                return Err(ShapeError::DegenerateTriangle(t));
            }
            face_normals.push(cross / norm);
        }
        Ok(Self {
            vertices,
            triangles,
            face_normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// V - E + F over unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let edges: BTreeSet<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Applies `p -> rotation * p + translation`.
    pub fn transformed(&self, rotation: &crate::Mat3, translation: &Vec3) -> Self {
        let vertices = self.vertices.iter().map(|v| rotation * v + translation).collect();
        Self::new(vertices, self.triangles.clone()).expect("rigid motion keeps triangles valid")
    }
}

pub fn off_to_string(mesh: &TriMesh) -> String {
    let mut out = String::new();
    writeln!(out, "OFF").unwrap();
    writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.triangles.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z).unwrap();
    }
    for [a, b, c] in &mesh.triangles {
        writeln!(out, "3 {a} {b} {c}").unwrap();
    }
    out
}

pub fn write_off(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<(), ShapeError> {
    fs::write(path, off_to_string(mesh))?;
    Ok(())
}

/// Parses triangle-only ASCII OFF.
pub fn parse_off(text: &str) -> Result<TriMesh, ShapeError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, message: &str| ShapeError::Parse {
        line,
        message: message.to_string(),
    };
    match lines.next() {
        Some((_, "OFF")) => {}
        Some((n, _)) => return Err(err(n, "missing OFF header")),
        None => return Err(err(0, "empty file")),
    }
    let (n, counts) = lines.next().ok_or_else(|| err(0, "missing counts line"))?;
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| err(n, "bad counts line"))?;
    if counts.len() < 2 {
        return Err(err(n, "bad counts line"));
    }
    let mut vertices = Vec::with_capacity(counts[0]);
    for _ in 0..counts[0] {
        let (n, l) = lines.next().ok_or_else(|| err(0, "truncated vertex list"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err(n, "bad vertex"))?;
        if v.len() != 3 {
            return Err(err(n, "vertex needs 3 coordinates"));
        }
        vertices.push(Vec3::new(v[0], v[1], v[2]));
    }
    let mut triangles = Vec::with_capacity(counts[1]);
    for _ in 0..counts[1] {
        let (n, l) = lines.next().ok_or_else(|| err(0, "truncated face list"))?;
        let f: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err(n, "bad face"))?;
        if f.len() != 4 || f[0] != 3 {
            return Err(err(n, "only triangles are supported"));
        }
        triangles.push([f[1], f[2], f[3]]);
    }
    TriMesh::new(vertices, triangles)
}

pub fn read_off(path: impl AsRef<Path>) -> Result<TriMesh, ShapeError> {
    parse_off(&fs::read_to_string(path)?)
}
