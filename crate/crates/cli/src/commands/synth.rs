use anyhow::{bail, Context, Result};
use clap::Args;
use modnet::geom::write_xyz;
use modnet::shapes::{write_off, NoiseModel, ShapeSpec};
use modnet::train::synthesize_dataset;

use super::{common_flags, prepare};
use crate::manifest::{parse_split, write_manifest, ManifestRow, MANIFEST_NAME};
use crate::settings::{Command, Settings};
use crate::{Common, UsageError};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Comma-separated shape names (cube, sphere, cylinder, torus, icosahedron).
    #[arg(long)]
    shapes: Option<String>,
    /// Points sampled per shape.
    #[arg(long)]
    points: Option<usize>,
    /// Noise levels as `model:sigma,sigma,...`; join models with `;`.
    #[arg(long)]
    noise: Option<String>,
    /// `train` or `test`.
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    common: Common,
}

/// Parses `gaussian:0.005,0.01;laplace:0.01` into `(model, sigma)` pairs.
pub fn parse_noise(spec: &str) -> Result<Vec<(NoiseModel, f64)>> {
    let mut out = Vec::new();
    for group in spec.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let (model, levels) = group
            .split_once(':')
            .ok_or_else(|| UsageError(format!("noise `{group}` must look like model:sigma[,sigma...]")))?;
        let model: NoiseModel = model.parse().map_err(|e| UsageError(format!("{e}")))?;
        for l in levels.split(',') {
            let sigma: f64 = l
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("bad noise level `{l}`")))?;
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(UsageError(format!("noise level must be nonnegative, got {sigma}")).into());
            }
            out.push((model, sigma));
        }
    }
    if out.is_empty() {
        return Err(UsageError("no noise levels given".into()).into());
    }
    Ok(out)
}

pub fn run(a: SynthArgs) -> Result<()> {
    let mut flags = common_flags(&a.common);
    flags.extend([
        ("shapes", a.shapes.clone()),
        ("points", a.points.map(|p| p.to_string())),
        ("noise", a.noise.clone()),
        ("split", a.split.clone()),
    ]);
    let s = Settings::resolve(Command::Synth, a.common.config.as_deref(), &flags, &a.common.set)?;
    let shapes: Vec<ShapeSpec> = s
        .raw("shapes")
        .split(',')
        .map(|n| n.parse().map_err(|e| UsageError(format!("{e}"))))
        .collect::<Result<_, _>>()?;
    let points: usize = s.get("points")?;
    if points == 0 {
        bail!(UsageError("points must be positive".into()));
    }
    let levels = parse_noise(s.raw("noise"))?;
    let split = parse_split(s.raw("split")).map_err(|e| UsageError(e.to_string()))?;
    let seed: u64 = s.get("seed")?;
    prepare(&a.common, &s)?;

    let data = synthesize_dataset(&shapes, &levels, points, seed, split)?;
    let out = &a.common.out;
    let mut rows = Vec::new();
    for e in &data.entries {
        let name = e.name();
        let clean = format!("{name}_clean.xyzn");
        let mesh = format!("{name}.off");
        write_xyz(out.join(&clean), &e.clean).with_context(|| format!("writing {clean}"))?;
        write_off(out.join(&mesh), &e.mesh).with_context(|| format!("writing {mesh}"))?;
        for n in &e.noisy {
            let noisy = format!("{name}_{}_{}.xyz", n.model, n.sigma_frac);
            write_xyz(out.join(&noisy), &n.cloud).with_context(|| format!("writing {noisy}"))?;
            rows.push(ManifestRow {
                shape: e.spec,
                n_points: points,
                noise: n.model,
                sigma: n.sigma_frac,
                seed,
                split,
                clean: clean.clone(),
                noisy,
                mesh: mesh.clone(),
            });
        }
    }
    write_manifest(&out.join(MANIFEST_NAME), &rows)?;
    println!("wrote {} clouds from {} shapes to {}", rows.len(), data.entries.len(), out.display());
    Ok(())
}
