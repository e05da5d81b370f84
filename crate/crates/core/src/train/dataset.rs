use rayon::prelude::*;

use super::TrainError;
use crate::geom::PointCloud;
use crate::rng::stream;
use crate::rng::derive_seed;
use crate::shapes::{add_noise, gen_shape, sample_surface, NoiseModel, NoiseSpec, ShapeSpec, TriMesh};

/// Gaussian noise levels (fractions of the bounding-box diagonal) of the training grid.
pub const TRAIN_NOISE_GRID: [f64; 5] = [0.0, 0.0025, 0.005, 0.01, 0.015];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCloud {
    pub model: NoiseModel,
    pub sigma_frac: f64,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub spec: ShapeSpec,
    pub mesh: TriMesh,
    /// Clean samples with normals.
    pub clean: PointCloud,
    /// Same points, same order, displaced by noise.
    pub noisy: Vec<NoisyCloud>,
    pub split: Split,
}

impl DatasetEntry {
    pub fn name(&self) -> &'static str {
        self.spec.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

/// Samples each shape once and adds Gaussian noise at every grid level.
pub fn build_dataset(
    specs: &[ShapeSpec],
    noise_grid: &[f64],
    n_points: usize,
    seed: u64,
    split: Split,
) -> Result<Dataset, TrainError> {
    let levels: Vec<(NoiseModel, f64)> = noise_grid.iter().map(|&s| (NoiseModel::Gaussian, s)).collect();
    synthesize_dataset(specs, &levels, n_points, seed, split)
}

/// Samples each shape once and adds every `(model, sigma)` noise level to it.
pub fn synthesize_dataset(
    specs: &[ShapeSpec],
    levels: &[(NoiseModel, f64)],
    n_points: usize,
    seed: u64,
    split: Split,
) -> Result<Dataset, TrainError> {
    if specs.is_empty() || levels.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let entries = specs
        .par_iter()
        .enumerate()
        .map(|(s, spec)| {
            let mesh = gen_shape(spec, spec.default_resolution())?;
            let mut rng = stream(seed, &[0x7361_6d70, s as u64]);
            let clean = sample_surface(&mesh, n_points, &mut rng)?;
            let noisy = levels
                .iter()
                .enumerate()
                .map(|(l, &(model, sigma))| {
                    let spec = NoiseSpec::new(model, sigma, derive_seed(seed, &[0x6e6f_6973, s as u64, l as u64]))?;
                    Ok(NoisyCloud {
                        model,
                        sigma_frac: sigma,
                        cloud: add_noise(&clean, &spec),
                    })
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            Ok(DatasetEntry {
                spec: *spec,
                mesh,
                clean,
                noisy,
                split,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(Dataset { entries })
}
