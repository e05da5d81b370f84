use super::TrainError;
use crate::loss::LossConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Patches per optimizer step.
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub loss: LossConfig,
    /// Patch centers drawn from each noisy cloud per epoch.
    pub patches_per_shape_per_epoch: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

/// Desk scale: a few thousand steps instead of a multi-hour run, so the
/// schedule starts higher and ends higher than [`TrainConfig::paper`].
impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 32,
            lr_start: 2e-2,
            lr_end: 1e-3,
            seed: 0,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            patches_per_shape_per_epoch: 3072,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Full-scale schedule: 40 epochs, 200 patches per step, learning rate
    /// 1e-4 down to 1e-7, no clipping.
    pub fn paper() -> Self {
        Self {
            epochs: 40,
            batch_size: 200,
            lr_start: 1e-4,
            lr_end: 1e-7,
            clip_norm: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch norm needs two patches)");
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return bad("learning rates must satisfy lr_start >= lr_end > 0");
        }
        if self.patches_per_shape_per_epoch == 0 {
            return bad("patches_per_shape_per_epoch must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.loss.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Geometric interpolation from `lr_start` (first epoch) to `lr_end` (last epoch).
pub fn lr_schedule(cfg: &TrainConfig, epoch: usize) -> Result<f64, TrainError> {
    if epoch >= cfg.epochs {
        return Err(TrainError::EpochOutOfRange {
            epoch,
            epochs: cfg.epochs,
        });
    }
    if epoch == 0 {
        return Ok(cfg.lr_start);
    }
    if epoch == cfg.epochs - 1 {
        return Ok(cfg.lr_end);
    }
    let t = epoch as f64 / (cfg.epochs - 1) as f64;
    Ok(cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(t))
}
