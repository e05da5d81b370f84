use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::{lr_schedule, Dataset, Split, TrainConfig, TrainError};
use crate::autodiff::{sgd_step, Mode, Tape};
use crate::geom::{extract_gt_patch, extract_multiscale_patch, GeomError, MultiScalePatch, PointCloud, SpatialIndex};
use crate::loss::{total_loss, LossBreakdown, PatchTargets};
use crate::model::{ModNet, PatchBatch};
use crate::rng::{stream, Rng};

/// Column header of the training log.
pub const LOG_HEADER: &str = "epoch,step,lr,L_s1,L_s2,L_s3,L_r1,L_r2,L_r3,L_dp,L_final,L_total";

/// One optimizer step, as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

impl StepLog {
    pub fn csv_line(&self) -> String {
        let l = &self.loss;
        let vals = [
            l.l_s[0], l.l_s[1], l.l_s[2], l.l_r[0], l.l_r[1], l.l_r[2], l.l_dp, l.l_final, l.l_total,
        ];
        let vals: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
        format!("{},{},{:e},{}", self.epoch, self.step, self.lr, vals.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub patches: usize,
    /// Centers dropped because they were isolated or had no clean support.
    pub skipped: usize,
    /// Mean over the epoch's steps.
    pub mean: LossBreakdown,
}

/// Training-split clouds with their spatial indices.
pub struct IndexedDataset<'a> {
    sources: Vec<Source<'a>>,
}

struct Source<'a> {
    noisy: &'a PointCloud,
    noisy_index: SpatialIndex,
    clean: &'a PointCloud,
    clean_index: &'a SpatialIndex,
}

impl<'a> IndexedDataset<'a> {
    pub fn new(dataset: &'a Dataset, clean_indices: &'a [SpatialIndex]) -> Result<Self, TrainError> {
        let mut sources = Vec::new();
        for (e, ci) in dataset.entries.iter().zip(clean_indices) {
            if e.split != Split::Train {
                continue;
            }
            for n in &e.noisy {
                sources.push(Source {
                    noisy: &n.cloud,
                    noisy_index: SpatialIndex::build(&n.cloud)?,
                    clean: &e.clean,
                    clean_index: ci,
                });
            }
        }
        if sources.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        Ok(Self { sources })
    }

    pub fn clean_indices(dataset: &Dataset) -> Result<Vec<SpatialIndex>, TrainError> {
        dataset
            .entries
            .iter()
            .map(|e| SpatialIndex::build(&e.clean).map_err(TrainError::from))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Multi-scale input patch and ground truth for noisy point `i`. Returns
/// `None` for isolated points and for centers with no clean support.
pub fn prepare_patch(
    noisy: &PointCloud,
    noisy_index: &SpatialIndex,
    clean: &PointCloud,
    clean_index: &SpatialIndex,
    i: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Option<(MultiScalePatch, PatchTargets)>, TrainError> {
    let m = &cfg.model;
    let patch = match extract_multiscale_patch(noisy, noisy_index, i, &m.radii_frac, m.n_patch, rng) {
        Ok(p) => p,
        Err(GeomError::IsolatedPoint(_)) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut gt = |r: f64| match extract_gt_patch(clean, clean_index, &patch, r, cfg.loss.m_final, rng) {
        Ok(g) => Ok(Some(g)),
        Err(GeomError::NoGroundTruthSupport { .. }) => Ok(None),
        Err(e) => Err(TrainError::from(e)),
    };
    let (Some(g0), Some(g1), Some(g2), Some(fin)) = (
        gt(m.radii_frac[0])?,
        gt(m.radii_frac[1])?,
        gt(m.radii_frac[2])?,
        gt(cfg.loss.r_final_frac)?,
    ) else {
        return Ok(None);
    };
    Ok(Some((
        patch,
        PatchTargets {
            scales: [g0, g1, g2],
            fin,
        },
    )))
}

/// Forward, loss, backward, clip, and SGD update on one batch.
pub fn train_step(
    model: &mut ModNet,
    batch: &PatchBatch,
    targets: &[PatchTargets],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown, TrainError> {
    let (grads, updates, breakdown) = {
        let mut tape = Tape::new(model.store(), Mode::Train);
        let vars = model.forward(&mut tape, batch)?;
        let (loss, breakdown) = total_loss(&mut tape, &vars, targets, &cfg.loss)?;
        let grads = tape.backward(loss)?;
        (grads, tape.take_running_updates(), breakdown)
    };
    let store = model.store_mut();
    store.accumulate(&grads);
    if let Some(c) = cfg.clip_norm {
        store.clip_grad_norm(c);
    }
    store.apply_running_updates(&updates);
    sgd_step(store, lr)?;
    Ok(breakdown)
}

const CENTER_TAG: u64 = 0x6365_6e74;
const SHUFFLE_TAG: u64 = 0x7368_7566;
const PATCH_TAG: u64 = 0x7061_7463;

/// One pass over freshly drawn patch centers. `step` is the global step
/// counter and is advanced in place.
pub fn train_epoch(
    model: &mut ModNet,
    data: &IndexedDataset<'_>,
    cfg: &TrainConfig,
    epoch: usize,
    step: &mut usize,
    log: &mut dyn FnMut(&StepLog),
) -> Result<EpochStats, TrainError> {
    cfg.validate()?;
    let lr = lr_schedule(cfg, epoch)?;
    let mut jobs: Vec<(usize, usize, usize)> = Vec::new();
    for (s, src) in data.sources.iter().enumerate() {
        let mut rng = stream(cfg.seed, &[CENTER_TAG, epoch as u64, s as u64]);
        for j in 0..cfg.patches_per_shape_per_epoch {
            jobs.push((s, j, rng.gen_range(0..src.noisy.len())));
        }
    }
    jobs.shuffle(&mut stream(cfg.seed, &[SHUFFLE_TAG, epoch as u64]));

    let mut sum = LossBreakdown::default();
    let (mut steps, mut patches, mut skipped) = (0, 0, 0);
    for chunk in jobs.chunks(cfg.batch_size) {
        let prepared: Vec<Option<(MultiScalePatch, PatchTargets)>> = chunk
            .par_iter()
            .map(|&(s, j, i)| {
                let src = &data.sources[s];
                let mut rng = stream(cfg.seed, &[PATCH_TAG, epoch as u64, s as u64, j as u64]);
                prepare_patch(src.noisy, &src.noisy_index, src.clean, src.clean_index, i, cfg, &mut rng)
            })
            .collect::<Result<_, _>>()?;
        let (inputs, targets): (Vec<_>, Vec<_>) = prepared.into_iter().flatten().unzip();
        skipped += chunk.len() - inputs.len();
        if inputs.len() < 2 {
            skipped += inputs.len();
            continue;
        }
        let refs: Vec<&MultiScalePatch> = inputs.iter().collect();
        let batch = PatchBatch::from_patches(&refs, true)?;
        let loss = train_step(model, &batch, &targets, cfg, lr)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step: *step,
                breakdown: Box::new(loss),
            });
        }
        log(&StepLog {
            epoch,
            step: *step,
            lr,
            loss,
        });
        sum.add_scaled(&loss, 1.0);
        *step += 1;
        steps += 1;
        patches += inputs.len();
    }
    if steps == 0 {
        return Err(TrainError::NoPatches(epoch));
    }
    let mut mean = LossBreakdown::default();
    mean.add_scaled(&sum, 1.0 / steps as f64);
    Ok(EpochStats {
        epoch,
        lr,
        steps,
        patches,
        skipped,
        mean,
    })
}

/// Runs every epoch of `cfg` on the training split of `dataset`.
pub fn train(
    model: &mut ModNet,
    dataset: &Dataset,
    cfg: &TrainConfig,
    log: &mut dyn FnMut(&StepLog),
) -> Result<Vec<EpochStats>, TrainError> {
    cfg.validate()?;
    let clean = IndexedDataset::clean_indices(dataset)?;
    let data = IndexedDataset::new(dataset, &clean)?;
    let mut step = 0;
    (0..cfg.epochs)
        .map(|e| train_epoch(model, &data, cfg, e, &mut step, log))
        .collect()
}
