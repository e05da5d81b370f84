use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use modnet::geom::{read_xyz, write_xyz};
use modnet::model::{denoise_cloud, write_weights, DenoiseConfig};
use modnet::train::load_checkpoint;

use super::{common_flags, file_stem, prepare};
use crate::settings::{Command, Settings};
use crate::Common;

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Point clouds to denoise (XYZ or XYZN).
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Also write the per-point 3x3 scale weights (nine columns).
    #[arg(long)]
    export_weights: bool,
    /// Patches per forward pass.
    #[arg(long)]
    batch_size: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn run(a: DenoiseArgs) -> Result<()> {
    let mut flags = common_flags(&a.common);
    flags.push(("denoise_batch", a.batch_size.map(|v| v.to_string())));
    let s = Settings::resolve(Command::Denoise, a.common.config.as_deref(), &flags, &a.common.set)?;
    let model_cfg = s.model_config()?;
    let cfg = DenoiseConfig {
        seed: s.get("seed")?,
        batch_size: s.get::<usize>("denoise_batch")?.max(1),
    };
    prepare(&a.common, &s)?;
    let model = load_checkpoint(&a.checkpoint, &model_cfg)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    for input in &a.inputs {
        let cloud = read_xyz(input).with_context(|| format!("reading {}", input.display()))?;
        let out = denoise_cloud(&cloud, &model, &cfg)?;
        let stem = file_stem(input);
        let path = a.common.out.join(format!("{stem}.denoised.xyz"));
        write_xyz(&path, &out.cloud).with_context(|| format!("writing {}", path.display()))?;
        if out.isolated > 0 {
            eprintln!("warning: {}: {} isolated points copied unchanged", input.display(), out.isolated);
        }
        if a.export_weights {
            let wpath = a.common.out.join(format!("{stem}.weights.txt"));
            let f = std::fs::File::create(&wpath).with_context(|| format!("creating {}", wpath.display()))?;
            write_weights(std::io::BufWriter::new(f), &out.weights)?;
        }
        println!("{} -> {}", input.display(), path.display());
    }
    Ok(())
}
