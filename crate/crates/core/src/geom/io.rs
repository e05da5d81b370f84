//! Plain-text XYZ / XYZN point files: one point per line, `x y z` or
//! `x y z nx ny nz`, `#` comment lines ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{GeomError, PointCloud};
use crate::Vec3;

/// Parses XYZ or XYZN text. All data lines must have the same column count.
pub fn parse_xyz(text: &str) -> Result<PointCloud, GeomError> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GeomError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if values.len() != 3 && values.len() != 6 {
            return Err(GeomError::Parse {
                line: lineno + 1,
                message: format!("expected 3 or 6 values, found {}", values.len()),
            });
        }
        if *columns.get_or_insert(values.len()) != values.len() {
            return Err(GeomError::Parse {
                line: lineno + 1,
                message: "inconsistent column count".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::Parse {
                line: lineno + 1,
                message: "non-finite coordinate".into(),
            });
        }
        points.push(Vec3::new(values[0], values[1], values[2]));
        if values.len() == 6 {
            normals.push(Vec3::new(values[3], values[4], values[5]));
        }
    }
    if columns == Some(6) {
        PointCloud::with_normals(points, normals)
    } else {
        Ok(PointCloud::new(points))
    }
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud, GeomError> {
    parse_xyz(&fs::read_to_string(path)?)
}

/// Formats with 17 significant digits, writing normals when present.
pub fn xyz_to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 80);
    let fmt = |out: &mut String, v: &Vec3| {
        write!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z).expect("writing to a String");
    };
    for (i, p) in cloud.points().iter().enumerate() {
        fmt(&mut out, p);
        if let Some(ns) = cloud.normals() {
            out.push(' ');
            fmt(&mut out, &ns[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), GeomError> {
    fs::write(path, xyz_to_string(cloud))?;
    Ok(())
}
