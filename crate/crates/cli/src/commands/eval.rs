use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use modnet::geom::read_xyz;
use modnet::metrics::{chamfer_distance, mse_metric, p2m_metric};
use modnet::shapes::read_off;

use super::{common_flags, file_stem, prepare};
use crate::settings::{Command, Settings};
use crate::{Common, UsageError};

pub const METRICS_NAME: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "name,n_filtered,n_gt,cd,mse,p2m";

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Filtered clouds; paired in order with `--gt`.
    #[arg(long, required = true, num_args = 1..)]
    filtered: Vec<PathBuf>,
    /// Ground-truth clouds.
    #[arg(long, required = true, num_args = 1..)]
    gt: Vec<PathBuf>,
    /// Ground-truth meshes for P2M; none, or one per pair.
    #[arg(long, num_args = 1..)]
    mesh: Vec<PathBuf>,
    /// Print CD and P2M in units of 1e-4 and MSE in units of 1e-2. The CSV stays raw.
    #[arg(long)]
    paper_scale: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub n_filtered: usize,
    pub n_gt: usize,
    pub cd: f64,
    pub mse: f64,
    pub p2m: Option<f64>,
}

/// Raw values at 12 significant digits.
pub fn csv_line(r: &MetricRow) -> String {
    let p2m = r.p2m.map_or(String::new(), |v| format!("{v:.11e}"));
    format!("{},{},{},{:.11e},{:.11e},{}", r.name, r.n_filtered, r.n_gt, r.cd, r.mse, p2m)
}

fn display_line(r: &MetricRow, paper_scale: bool) -> String {
    let (c, m) = if paper_scale { (1e4, 1e2) } else { (1.0, 1.0) };
    let p2m = r.p2m.map_or("-".to_string(), |v| format!("{:.4}", v * c));
    if paper_scale {
        format!("{:<24} CD(1e-4) {:.4}  MSE(1e-2) {:.4}  P2M(1e-4) {p2m}", r.name, r.cd * c, r.mse * m)
    } else {
        format!("{:<24} CD {:.6e}  MSE {:.6e}  P2M {p2m}", r.name, r.cd, r.mse)
    }
}

pub fn run(a: EvalArgs) -> Result<()> {
    let flags = common_flags(&a.common);
    let s = Settings::resolve(Command::Eval, a.common.config.as_deref(), &flags, &a.common.set)?;
    let neighbors: usize = s.get("mse_neighbors")?;
    if a.filtered.len() != a.gt.len() {
        return Err(UsageError(format!("{} filtered clouds but {} ground truths", a.filtered.len(), a.gt.len())).into());
    }
    if !a.mesh.is_empty() && a.mesh.len() != a.gt.len() {
        return Err(UsageError(format!("{} meshes for {} pairs", a.mesh.len(), a.gt.len())).into());
    }
    prepare(&a.common, &s)?;
    let mut csv = format!("{METRICS_HEADER}\n");
    for (i, (f, g)) in a.filtered.iter().zip(&a.gt).enumerate() {
        let filtered = read_xyz(f).with_context(|| format!("reading {}", f.display()))?;
        let gt = read_xyz(g).with_context(|| format!("reading {}", g.display()))?;
        let p2m = match a.mesh.get(i) {
            Some(m) => {
                let mesh = read_off(m).with_context(|| format!("reading {}", m.display()))?;
                Some(p2m_metric(&filtered, &mesh)?)
            }
            None => None,
        };
        let row = MetricRow {
            name: file_stem(f),
            n_filtered: filtered.len(),
            n_gt: gt.len(),
            cd: chamfer_distance(&filtered, &gt)?,
            mse: mse_metric(&filtered, &gt, neighbors)?,
            p2m,
        };
        csv.push_str(&csv_line(&row));
        csv.push('\n');
        println!("{}", display_line(&row, a.paper_scale));
    }
    let path = a.common.out.join(METRICS_NAME);
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_at_twelve_digits() {
        let r = MetricRow {
            name: "a".into(),
            n_filtered: 3,
            n_gt: 4,
            cd: 1.234567890123456e-4,
            mse: 0.1,
            p2m: None,
        };
        let line = csv_line(&r);
        let f: Vec<&str> = line.split(',').collect();
        let cd: f64 = f[3].parse().unwrap();
        assert!((cd - r.cd).abs() <= 5e-12 * r.cd);
        assert_eq!(f[5], "");
        assert!(display_line(&r, true).contains("CD(1e-4) 1.2346"));
        assert!(display_line(&r, true).contains("MSE(1e-2) 10.0000"));
    }
}
