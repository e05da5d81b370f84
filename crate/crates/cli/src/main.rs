//! `modnet`: synthesize data, train, denoise, evaluate, and self-check.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod settings;

/// Bad flags, config keys, or setting values. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A self-check ran and failed. Exit code 3.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Parser, Debug)]
#[command(name = "modnet", version, about = "Multi-offset point cloud denoising")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

/// Flags every command accepts.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Plain-text `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override any setting, `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate clean/noisy clouds, meshes, and a manifest.
    Synth(commands::synth::SynthArgs),
    /// Train a model on a manifest's training clouds.
    Train(commands::train::TrainArgs),
    /// Denoise point clouds with a checkpoint.
    Denoise(commands::denoise::DenoiseArgs),
    /// Compute CD, MSE, and P2M metrics.
    Eval(commands::eval::EvalArgs),
    /// Finite-difference check of every op and the whole network.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Synth(a) => commands::synth::run(a),
        Cmd::Train(a) => commands::train::run(a),
        Cmd::Denoise(a) => commands::denoise::run(a),
        Cmd::Eval(a) => commands::eval::run(a),
        Cmd::Gradcheck(a) => commands::gradcheck::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else if e.downcast_ref::<VerificationFailed>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
