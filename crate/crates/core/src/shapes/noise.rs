use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ShapeError;
use crate::geom::PointCloud;
use crate::rng;
use crate::Vec3;

/// Additive noise distribution. Every model is scaled so that each
/// coordinate has standard deviation sigma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseModel {
    Gaussian,
    /// Laplace(0, sigma / sqrt 2).
    Laplace,
    /// Uniform(-sqrt(3) sigma, +sqrt(3) sigma).
    Uniform,
    /// Three-point lattice {-a, 0, +a} with equal probability, a = sigma sqrt(3/2).
    Discrete,
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Laplace => "laplace",
            Self::Uniform => "uniform",
            Self::Discrete => "discrete",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseModel {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gaussian" => Ok(Self::Gaussian),
            "laplace" => Ok(Self::Laplace),
            "uniform" => Ok(Self::Uniform),
            "discrete" => Ok(Self::Discrete),
            other => Err(ShapeError::UnknownNoise(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    /// Standard deviation as a fraction of the bounding-box diagonal.
    pub sigma_frac: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(model: NoiseModel, sigma_frac: f64, seed: u64) -> Result<Self, ShapeError> {
        if !(sigma_frac >= 0.0) || !sigma_frac.is_finite() {
            return Err(ShapeError::BadNoiseLevel(sigma_frac));
        }
        Ok(Self {
            model,
            sigma_frac,
            seed,
        })
    }

    pub fn gaussian(sigma_frac: f64, seed: u64) -> Self {
        Self::new(NoiseModel::Gaussian, sigma_frac, seed).expect("nonnegative noise level")
    }
}

/// Returns `P + N`. Normals are dropped: noisy clouds carry none.
pub fn add_noise(cloud: &PointCloud, spec: &NoiseSpec) -> PointCloud {
    let sigma = spec.sigma_frac * cloud.bbox_diag();
    if sigma == 0.0 {
        return cloud.without_normals();
    }
    let mut rng = rng::stream(spec.seed, &[0x6e6f697365]);
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let laplace_b = sigma / 2f64.sqrt();
    let uniform_half = 3f64.sqrt() * sigma;
    let lattice = (1.5f64).sqrt() * sigma;
    let mut draw = || -> f64 {
        match spec.model {
            NoiseModel::Gaussian => normal.sample(&mut rng),
            NoiseModel::Laplace => {
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -laplace_b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseModel::Uniform => rng.gen_range(-uniform_half..uniform_half),
            NoiseModel::Discrete => match rng.gen_range(0..3) {
                0 => -lattice,
                1 => 0.0,
                _ => lattice,
            },
        }
    };
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let (dx, dy, dz) = (draw(), draw(), draw());
            p + Vec3::new(dx, dy, dz)
        })
        .collect();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_diag_cloud(n: usize) -> PointCloud {
        let mut rng = rng::stream(9, &[]);
        let s = 1.0 / 3f64.sqrt();
        let mut pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.gen_range(0.0..s), rng.gen_range(0.0..s), rng.gen_range(0.0..s)))
            .collect();
        pts[0] = Vec3::zeros();
        pts[1] = Vec3::new(s, s, s);
        PointCloud::new(pts)
    }

    fn coord_std(a: &PointCloud, b: &PointCloud) -> f64 {
        let d: Vec<f64> = a
            .points()
            .iter()
            .zip(b.points())
            .flat_map(|(p, q)| (q - p).iter().copied().collect::<Vec<_>>())
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
    }

    #[test]
    fn zero_noise_is_identity() {
        let cloud = unit_diag_cloud(100);
        for model in [NoiseModel::Gaussian, NoiseModel::Laplace, NoiseModel::Uniform, NoiseModel::Discrete] {
            let out = add_noise(&cloud, &NoiseSpec::new(model, 0.0, 1).unwrap());
            assert_eq!(out.points(), cloud.points());
            assert!(out.normals().is_none());
        }
    }

    #[test]
    fn gaussian_std_within_five_percent() {
        let cloud = unit_diag_cloud(50_000);
        assert!((cloud.bbox_diag() - 1.0).abs() < 1e-12);
        let noisy = add_noise(&cloud, &NoiseSpec::gaussian(0.01, 3));
        let std = coord_std(&cloud, &noisy);
        assert!((std - 0.01).abs() < 0.05 * 0.01, "std {std}");
    }

    #[test]
    fn every_model_has_variance_sigma_squared() {
        let cloud = unit_diag_cloud(50_000);
        for model in [NoiseModel::Gaussian, NoiseModel::Laplace, NoiseModel::Uniform, NoiseModel::Discrete] {
            let noisy = add_noise(&cloud, &NoiseSpec::new(model, 0.01, 5).unwrap());
            let var = coord_std(&cloud, &noisy).powi(2);
            assert!((var / 1e-4 - 1.0).abs() < 0.10, "{model}: var {var}");
        }
    }

    #[test]
    fn deterministic() {
        let cloud = unit_diag_cloud(1000);
        let spec = NoiseSpec::new(NoiseModel::Laplace, 0.015, 77).unwrap();
        assert_eq!(add_noise(&cloud, &spec), add_noise(&cloud, &spec));
        assert!(NoiseSpec::new(NoiseModel::Gaussian, -0.1, 0).is_err());
        assert!("pink".parse::<NoiseModel>().is_err());
    }
}
