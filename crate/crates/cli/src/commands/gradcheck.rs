use anyhow::Result;
use clap::Args;
use modnet::autodiff::OpKind;
use modnet::verify::run_verification;

use super::{common_flags, prepare};
use crate::settings::{Command, Settings};
use crate::{Common, UsageError, VerificationFailed};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random trials per op.
    #[arg(long)]
    trials: Option<usize>,
    /// End-to-end mini-batches.
    #[arg(long)]
    batches: Option<usize>,
    /// Patches per end-to-end mini-batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Corrupt the named op's backward pass (test fixture).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
    #[command(flatten)]
    common: Common,
}

pub fn run(a: GradcheckArgs) -> Result<()> {
    let mut flags = common_flags(&a.common);
    flags.extend([
        ("trials", a.trials.map(|v| v.to_string())),
        ("batches", a.batches.map(|v| v.to_string())),
        ("gradcheck_batch", a.batch_size.map(|v| v.to_string())),
    ]);
    let s = Settings::resolve(Command::Gradcheck, a.common.config.as_deref(), &flags, &a.common.set)?;
    let fault = match &a.inject_fault {
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| UsageError(format!("unknown op `{name}`")))?),
        None => None,
    };
    let trials: usize = s.get("trials")?;
    let batches: usize = s.get("batches")?;
    let batch: usize = s.get("gradcheck_batch")?;
    if trials == 0 || batches == 0 || batch < 2 {
        return Err(UsageError("need trials >= 1, batches >= 1, gradcheck_batch >= 2".into()).into());
    }
    let model_cfg = s.model_config()?;
    prepare(&a.common, &s)?;
    let report = run_verification(&model_cfg, trials, batches, batch, s.get("seed")?, fault)?;
    for line in report.lines() {
        println!("{line}");
    }
    if report.passed() {
        println!("all checks passed");
        Ok(())
    } else {
        let failing: Vec<&str> = report.ops.iter().filter(|r| !r.passed()).map(|r| r.op.name()).collect();
        let mut what = failing.join(", ");
        if !report.end_to_end.passed() {
            what = if what.is_empty() { "end_to_end".into() } else { format!("{what}, end_to_end") };
        }
        Err(VerificationFailed(format!("gradient check failed: {what}")).into())
    }
}
