use super::ModelError;
use crate::geom::{DEFAULT_N_PATCH, DEFAULT_RADII_FRAC, N_SCALES};

/// Layer widths and patch geometry of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Per-point encoder widths after the 3-channel input; the last is the
    /// per-scale feature width.
    pub encoder_widths: Vec<usize>,
    /// Width of the fused hidden layer.
    pub fc1_width: usize,
    /// Hidden width of the scale-weight head.
    pub weight_hidden: usize,
    /// Hidden widths of each per-scale decoder trunk.
    pub decoder_widths: [usize; 2],
    pub n_patch: usize,
    pub radii_frac: [f64; N_SCALES],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_widths: vec![64, 128, 256, 512],
            fc1_width: 512,
            weight_hidden: 256,
            decoder_widths: [256, 128],
            n_patch: DEFAULT_N_PATCH,
            radii_frac: DEFAULT_RADII_FRAC,
        }
    }
}

impl ModelConfig {
    /// Narrow network for tests.
    pub fn tiny() -> Self {
        Self {
            encoder_widths: vec![8, 12],
            fc1_width: 10,
            weight_hidden: 6,
            decoder_widths: [8, 6],
            n_patch: 32,
            radii_frac: DEFAULT_RADII_FRAC,
        }
    }

    pub fn feature_width(&self) -> usize {
        *self.encoder_widths.last().expect("validated non-empty")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.encoder_widths.is_empty() {
            return bad("encoder needs at least one layer");
        }
        let widths = self
            .encoder_widths
            .iter()
            .chain([&self.fc1_width, &self.weight_hidden])
            .chain(&self.decoder_widths);
        if widths.into_iter().any(|&w| w == 0) {
            return bad("layer widths must be positive");
        }
        if self.n_patch == 0 {
            return bad("n_patch must be positive");
        }
        let r = &self.radii_frac;
        if !(r[0] > 0.0 && r[0] < r[1] && r[1] < r[2]) {
            return bad("radii must be positive and strictly ascending");
        }
        Ok(())
    }
}
