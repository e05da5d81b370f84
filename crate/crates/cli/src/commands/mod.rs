use std::path::Path;

use anyhow::{Context, Result};

use crate::settings::Settings;
use crate::Common;

pub mod denoise;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod train;

/// Shared setup: thread pool, output directory, and the settings echo.
pub fn prepare(common: &Common, settings: &Settings) -> Result<()> {
    let threads: usize = settings.get("threads")?;
    if threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    for line in settings.echo().lines() {
        eprintln!("# {line}");
    }
    Ok(())
}

pub fn common_flags(common: &Common) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("seed", common.seed.map(|s| s.to_string())),
        ("threads", common.threads.map(|t| t.to_string())),
    ]
}

pub fn file_stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "cloud".into(), |s| s.to_string_lossy().into_owned())
}
