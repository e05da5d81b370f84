//! Dataset manifest: a CSV listing one noisy cloud per row together with its
//! clean source and mesh.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use modnet::geom::read_xyz;
use modnet::shapes::{read_off, NoiseModel, ShapeSpec};
use modnet::train::{Dataset, DatasetEntry, NoisyCloud, Split};

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "shape,n_points,noise,sigma,seed,split,clean,noisy,mesh";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub shape: ShapeSpec,
    pub n_points: usize,
    pub noise: NoiseModel,
    pub sigma: f64,
    pub seed: u64,
    pub split: Split,
    pub clean: String,
    pub noisy: String,
    pub mesh: String,
}

pub fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => bail!("split must be `train` or `test`, got `{s}`"),
    }
}

impl ManifestRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.shape,
            self.n_points,
            self.noise,
            self.sigma,
            self.seed,
            split_name(self.split),
            self.clean,
            self.noisy,
            self.mesh
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            bail!("expected 9 fields, found {}", f.len());
        }
        Ok(Self {
            shape: f[0].parse()?,
            n_points: f[1].parse()?,
            noise: f[2].parse()?,
            sigma: f[3].parse()?,
            seed: f[4].parse()?,
            split: parse_split(f[5])?,
            clean: f[6].to_string(),
            noisy: f[7].to_string(),
            mesh: f[8].to_string(),
        })
    }
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut text = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
        _ => bail!("{}: missing manifest header", path.display()),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| ManifestRow::parse(l.trim()).with_context(|| format!("{} line {}", path.display(), n + 1)))
        .collect()
}

/// Resolves `manifest` (a file or a directory holding `manifest.csv`).
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p.to_path_buf()
    }
}

/// Loads every referenced file, grouping noisy clouds by their clean source.
pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let path = manifest_path(manifest);
    let base = path.parent().unwrap_or(Path::new("."));
    let rows = read_manifest(&path)?;
    if rows.is_empty() {
        bail!("{}: manifest lists no clouds", path.display());
    }
    let mut groups: BTreeMap<(String, String), Vec<&ManifestRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in &rows {
        let key = (r.clean.clone(), r.mesh.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut entries = Vec::new();
    for key in order {
        let rs = &groups[&key];
        let first = rs[0];
        if rs.iter().any(|r| r.split != first.split || r.shape != first.shape) {
            return Err(anyhow!("{}: rows sharing {} disagree on shape or split", path.display(), first.clean));
        }
        let clean = read_xyz(base.join(&first.clean)).with_context(|| format!("reading {}", first.clean))?;
        if clean.normals().is_none() {
            bail!("{}: clean cloud needs normals (XYZN)", first.clean);
        }
        let mesh = read_off(base.join(&first.mesh)).with_context(|| format!("reading {}", first.mesh))?;
        let mut noisy = Vec::new();
        for r in rs {
            let cloud = read_xyz(base.join(&r.noisy)).with_context(|| format!("reading {}", r.noisy))?;
            if cloud.len() != clean.len() {
                bail!("{}: {} points, clean cloud has {}", r.noisy, cloud.len(), clean.len());
            }
            noisy.push(NoisyCloud {
                model: r.noise,
                sigma_frac: r.sigma,
                cloud,
            });
        }
        entries.push(DatasetEntry {
            spec: first.shape,
            mesh,
            clean,
            noisy,
            split: first.split,
        });
    }
    Ok(Dataset { entries })
}
