//! Finite-difference verification of the whole differentiable pipeline:
//! per-op suites plus end-to-end checks of the training loss through the
//! full network on random mini-batches.

use rand::Rng as _;

use crate::autodiff::gradcheck::{check_all_ops, finite_difference_check, Coords, OpCheck, FD_STEP};
use crate::autodiff::{Mode, OpKind};
use crate::geom::{PointCloud, SpatialIndex};
use crate::loss::{total_loss, LossConfig, PatchTargets};
use crate::model::{ModNet, ModelConfig, PatchBatch};
use crate::rng::stream;
use crate::shapes::{add_noise, gen_shape, sample_surface, NoiseSpec, ShapeSpec};
use crate::train::{prepare_patch, TrainConfig};
use crate::Result;

/// Tolerance of the end-to-end check.
pub const END_TO_END_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndCheck {
    pub batches: usize,
    pub batch_size: usize,
    pub coords_per_tensor: usize,
    /// Largest relative error per mini-batch.
    pub per_batch: Vec<f64>,
    pub tolerance: f64,
}

impl EndToEndCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.per_batch.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

/// Random training mini-batches drawn from a small noisy cube and sphere.
pub fn random_minibatches(
    model: &ModelConfig,
    n_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<(PatchBatch, Vec<PatchTargets>)>> {
    let cfg = TrainConfig {
        model: model.clone(),
        seed,
        ..TrainConfig::default()
    };
    let mut clouds = Vec::new();
    for (s, name) in ["cube", "sphere"].iter().enumerate() {
        let spec: ShapeSpec = name.parse()?;
        let mesh = gen_shape(&spec, spec.default_resolution())?;
        let clean = sample_surface(&mesh, 800, &mut stream(seed, &[0x7665_7269, s as u64]))?;
        let noisy = add_noise(&clean, &NoiseSpec::gaussian(0.01, seed ^ s as u64));
        let (ci, ni) = (SpatialIndex::build(&clean)?, SpatialIndex::build(&noisy)?);
        clouds.push((clean, ci, noisy, ni));
    }
    let mut rng = stream(seed, &[0x6261_7463]);
    let mut out = Vec::with_capacity(n_batches);
    while out.len() < n_batches {
        let mut patches = Vec::new();
        let mut targets = Vec::new();
        while patches.len() < batch_size {
            let (clean, ci, noisy, ni): &(PointCloud, SpatialIndex, PointCloud, SpatialIndex) =
                &clouds[rng.gen_range(0..clouds.len())];
            let i = rng.gen_range(0..noisy.len());
            if let Some((p, t)) = prepare_patch(noisy, ni, clean, ci, i, &cfg, &mut rng)? {
                patches.push(p);
                targets.push(t);
            }
        }
        let refs: Vec<_> = patches.iter().collect();
        out.push((PatchBatch::from_patches(&refs, true)?, targets));
    }
    Ok(out)
}

/// Checks `∂L_total/∂θ` for every parameter tensor against central
/// differences on `coords_per_tensor` random coordinates per tensor.
pub fn end_to_end_gradcheck(
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    n_batches: usize,
    batch_size: usize,
    coords_per_tensor: usize,
    seed: u64,
    fault: Option<OpKind>,
) -> Result<EndToEndCheck> {
    let batches = random_minibatches(model_cfg, n_batches, batch_size, seed)?;
    let mut per_batch = Vec::with_capacity(n_batches);
    for (b, (batch, targets)) in batches.iter().enumerate() {
        let mut model = ModNet::new(model_cfg.clone(), seed.wrapping_add(b as u64))?;
        let reference = model.clone();
        let mut coord_rng = stream(seed, &[0x636f_6f72, b as u64]);
        let err = finite_difference_check(
            model.store_mut(),
            Mode::Train,
            fault,
            FD_STEP,
            Coords::Sample(coords_per_tensor, &mut coord_rng),
            |tape| {
                let vars = reference.forward(tape, batch).map_err(model_err)?;
                let (loss, _) = total_loss(tape, &vars, targets, loss_cfg).map_err(loss_err)?;
                Ok(loss)
            },
        )?;
        per_batch.push(err);
    }
    Ok(EndToEndCheck {
        batches: n_batches,
        batch_size,
        coords_per_tensor,
        per_batch,
        tolerance: END_TO_END_TOLERANCE,
    })
}

fn model_err(e: crate::model::ModelError) -> crate::autodiff::AutodiffError {
    match e {
        crate::model::ModelError::Autodiff(a) => a,
        other => panic!("model error during gradient check: {other}"),
    }
}

fn loss_err(e: crate::loss::LossError) -> crate::autodiff::AutodiffError {
    match e {
        crate::loss::LossError::Autodiff(a) => a,
        other => panic!("loss error during gradient check: {other}"),
    }
}

/// Per-op suites followed by the end-to-end check.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub ops: Vec<OpCheck>,
    pub end_to_end: EndToEndCheck,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(OpCheck::passed) && self.end_to_end.passed()
    }

    /// One line per op, then the end-to-end line.
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .ops
            .iter()
            .map(|r| {
                format!(
                    "{:<12} trials {:>4}  max rel err {:.3e}  tol {:.0e}  {}",
                    r.op.name(),
                    r.trials,
                    r.max_rel_err,
                    r.tolerance,
                    if r.passed() { "PASS" } else { "FAIL" }
                )
            })
            .collect();
        let e = &self.end_to_end;
        out.push(format!(
            "{:<12} batches {:>3}  max rel err {:.3e}  tol {:.0e}  {}",
            "end_to_end",
            e.batches,
            e.max_rel_err(),
            e.tolerance,
            if e.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

pub fn run_verification(
    model_cfg: &ModelConfig,
    op_trials: usize,
    n_batches: usize,
    batch_size: usize,
    seed: u64,
    fault: Option<OpKind>,
) -> Result<VerificationReport> {
    let ops = check_all_ops(op_trials, seed, fault)?;
    let end_to_end = end_to_end_gradcheck(model_cfg, &LossConfig::default(), n_batches, batch_size, 20, seed, fault)?;
    Ok(VerificationReport { ops, end_to_end })
}
