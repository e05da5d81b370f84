use std::io::Write;

use rayon::prelude::*;

use super::{ModNet, ModelError, PatchBatch};
use crate::autodiff::Mode;
use crate::geom::{extract_multiscale_patch, GeomError, PointCloud, SpatialIndex};
use crate::rng::stream;
use crate::Vec3;

/// Scale weight reported for points that were copied through unchanged.
pub const ISOLATED_WEIGHT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiseConfig {
    /// Seeds patch downsampling; per-point streams keep results independent of
    /// batching and thread count.
    pub seed: u64,
    /// Patches per forward pass.
    pub batch_size: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub cloud: PointCloud,
    /// Per point, scale-major then axis-minor: `w[scale * 3 + axis]`.
    pub weights: Vec<[f64; 9]>,
    /// Points with no neighbours, copied through unchanged.
    pub isolated: usize,
}

/// Displaces every point by the network's prediction, mapped back from its
/// patch frame. Batch norm runs on its running statistics.
pub fn denoise_cloud(noisy: &PointCloud, model: &ModNet, cfg: &DenoiseConfig) -> Result<DenoiseOutput, ModelError> {
    let index = SpatialIndex::build(noisy)?;
    let mc = model.config();
    let n = noisy.len();
    let chunk = cfg.batch_size.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let pieces: Vec<Result<Vec<(Vec3, [f64; 9], bool)>, ModelError>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + chunk).min(n);
            let mut patches = Vec::with_capacity(end - start);
            let mut slots = Vec::with_capacity(end - start);
            for i in start..end {
                let mut rng = stream(cfg.seed, &[0x6465_6e6f, i as u64]);
                match extract_multiscale_patch(noisy, &index, i, &mc.radii_frac, mc.n_patch, &mut rng) {
                    Ok(p) => {
                        slots.push(Some(patches.len()));
                        patches.push(p);
                    }
                    Err(GeomError::IsolatedPoint(_)) => slots.push(None),
                    Err(e) => return Err(e.into()),
                }
            }
            let out = if patches.is_empty() {
                None
            } else {
                let refs: Vec<_> = patches.iter().collect();
                let batch = PatchBatch::from_patches(&refs, true)?;
                Some(model.run(&batch, Mode::Eval)?)
            };
            Ok((start..end)
                .zip(slots)
                .map(|(i, slot)| {
                    let p = noisy.points()[i];
                    match (slot, &out) {
                        (Some(b), Some(out)) => {
                            let d = out.dp.row(b);
                            let shift = patches[b].frame.offset_to_world(&Vec3::new(d[0], d[1], d[2]));
                            let mut w = [0.0; 9];
                            w.copy_from_slice(&out.weights.data()[b * 9..(b + 1) * 9]);
                            (p + shift, w, false)
                        }
                        _ => (p, [ISOLATED_WEIGHT; 9], true),
                    }
                })
                .collect())
        })
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut isolated = 0;
    for piece in pieces {
        for (p, w, iso) in piece? {
            points.push(p);
            weights.push(w);
            isolated += usize::from(iso);
        }
    }
    Ok(DenoiseOutput {
        cloud: PointCloud::new(points),
        weights,
        isolated,
    })
}

/// One line per point: `w11 w12 w13 w21 w22 w23 w31 w32 w33` (scale-major).
pub fn write_weights<W: Write>(mut out: W, weights: &[[f64; 9]]) -> std::io::Result<()> {
    for w in weights {
        let line: Vec<String> = w.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()
}
