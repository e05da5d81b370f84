use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use modnet::model::ModNet;
use modnet::train::{checkpoint_digest, train, write_checkpoint, EpochStats, LOG_HEADER};

use super::{common_flags, prepare};
use crate::manifest::load_dataset;
use crate::settings::{Command, Settings};
use crate::Common;

pub const CHECKPOINT_NAME: &str = "model.ckpt";
pub const EPOCH_LOG_NAME: &str = "epochs.csv";
pub const STEP_LOG_NAME: &str = "steps.csv";
pub const CONFIG_ECHO_NAME: &str = "config.txt";
pub const EPOCH_LOG_HEADER: &str = "epoch,lr,steps,patches,skipped,L_s1,L_s2,L_s3,L_r1,L_r2,L_r3,L_dp,L_final,L_total";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Manifest file or the directory holding `manifest.csv`.
    #[arg(long)]
    data: PathBuf,
    /// `desk` (default) or `paper` schedule.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Patches per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    /// Patch centers per noisy cloud per epoch.
    #[arg(long)]
    patches_per_shape: Option<usize>,
    /// Gradient-norm cap, or `none`.
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the pre-offset loss; 0 trains on the final loss only.
    #[arg(long)]
    beta: Option<f64>,
    /// Points per patch scale.
    #[arg(long)]
    n_patch: Option<usize>,
    /// Three patch radii as fractions of the bounding-box diagonal.
    #[arg(long)]
    radii: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn epoch_line(s: &EpochStats) -> String {
    let m = &s.mean;
    let mut line = format!("{},{:e},{},{},{}", s.epoch, s.lr, s.steps, s.patches, s.skipped);
    for v in [m.l_s[0], m.l_s[1], m.l_s[2], m.l_r[0], m.l_r[1], m.l_r[2], m.l_dp, m.l_final, m.l_total] {
        write!(line, ",{v:e}").expect("writing to a String");
    }
    line
}

pub fn run(a: TrainArgs) -> Result<()> {
    let mut flags = common_flags(&a.common);
    flags.extend([
        ("preset", a.preset.clone()),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("lr_start", a.lr_start.map(|v| v.to_string())),
        ("lr_end", a.lr_end.map(|v| v.to_string())),
        ("patches_per_shape", a.patches_per_shape.map(|v| v.to_string())),
        ("clip_norm", a.clip_norm.clone()),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("beta", a.beta.map(|v| v.to_string())),
        ("n_patch", a.n_patch.map(|v| v.to_string())),
        ("radii", a.radii.clone()),
    ]);
    let s = Settings::resolve(Command::Train, a.common.config.as_deref(), &flags, &a.common.set)?;
    let cfg = s.train_config()?;
    prepare(&a.common, &s)?;
    let out = &a.common.out;
    std::fs::write(out.join(CONFIG_ECHO_NAME), s.echo()).context("writing config echo")?;

    let data = load_dataset(&a.data)?;
    let mut model = ModNet::new(cfg.model.clone(), cfg.seed)?;
    let mut steps = format!("{LOG_HEADER}\n");
    let stats = train(&mut model, &data, &cfg, &mut |log| {
        steps.push_str(&log.csv_line());
        steps.push('\n');
        if log.step % 100 == 0 {
            eprintln!("epoch {} step {} L_total {:.6}", log.epoch, log.step, log.loss.l_total);
        }
    })?;
    let mut epochs = format!("{EPOCH_LOG_HEADER}\n");
    for st in &stats {
        epochs.push_str(&epoch_line(st));
        epochs.push('\n');
        eprintln!("epoch {} lr {:.3e} steps {} L_total {:.6}", st.epoch, st.lr, st.steps, st.mean.l_total);
    }
    std::fs::write(out.join(STEP_LOG_NAME), steps).context("writing step log")?;
    std::fs::write(out.join(EPOCH_LOG_NAME), epochs).context("writing epoch log")?;
    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes)?;
    std::fs::write(out.join(CHECKPOINT_NAME), &bytes).context("writing checkpoint")?;
    println!("checkpoint {} sha256 {}", out.join(CHECKPOINT_NAME).display(), checkpoint_digest(&bytes));
    Ok(())
}
