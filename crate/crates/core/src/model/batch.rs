use super::ModelError;
use crate::autodiff::Tensor;
use crate::geom::{MultiScalePatch, N_SCALES};
use crate::Vec3;

/// Network input for one mini-batch, one point set per scale.
///
/// In compressed form, every point of a patch lying exactly at the origin
/// (origin padding and the query point itself) is stored once, at its first
/// position, with a multiplicity weight. Max-pooling and batch
/// normalization honour the weights, so the result equals the dense
/// `[batch, n_patch, 3]` computation while touching far fewer rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub batch: usize,
    pub n_patch: usize,
    /// `[rows, 3]` per scale.
    pub points: [Tensor; N_SCALES],
    /// Row multiplicities per scale; `None` means every row counts once.
    pub weights: [Option<Vec<f64>>; N_SCALES],
    /// Row ranges of each patch: patch `b` owns `offsets[b]..offsets[b + 1]`.
    pub offsets: [Vec<usize>; N_SCALES],
}

impl PatchBatch {
    pub fn from_patches(patches: &[&MultiScalePatch], compress: bool) -> Result<Self, ModelError> {
        let first = patches.first().ok_or(ModelError::EmptyBatch)?;
        let n_patch = first.n_patch();
        let mut points: [Vec<Vec3>; N_SCALES] = Default::default();
        let mut weights: [Vec<f64>; N_SCALES] = Default::default();
        let mut offsets: [Vec<usize>; N_SCALES] = Default::default();
        for k in 0..N_SCALES {
            offsets[k].push(0);
            for p in patches {
                let pts = &p.scale_points[k];
                if pts.len() != n_patch {
                    return Err(ModelError::InputShape {
                        scale: k,
                        got: vec![patches.len(), pts.len(), 3],
                        n_patch,
                    });
                }
                if compress {
                    let mut origin_row = None;
                    for q in pts {
                        if *q == Vec3::zeros() {
                            match origin_row {
                                Some(r) => weights[k][r] += 1.0,
                                None => {
                                    origin_row = Some(points[k].len());
                                    points[k].push(*q);
                                    weights[k].push(1.0);
                                }
                            }
                        } else {
                            points[k].push(*q);
                            weights[k].push(1.0);
                        }
                    }
                } else {
                    points[k].extend_from_slice(pts);
                }
                offsets[k].push(points[k].len());
            }
        }
        Ok(Self {
            batch: patches.len(),
            n_patch,
            points: points.map(|p| Tensor::from_vec3s(&p)),
            weights: weights.map(|w| compress.then_some(w)),
            offsets,
        })
    }

    /// Dense batch from `[batch, n_patch, 3]` tensors.
    pub fn from_dense(scales: [Tensor; N_SCALES]) -> Result<Self, ModelError> {
        let shape0 = scales[0].shape().to_vec();
        let mut batches = [0; N_SCALES];
        for (k, t) in scales.iter().enumerate() {
            let s = t.shape();
            if s.len() != 3 || s[2] != 3 || s[1] != shape0.get(1).copied().unwrap_or(0) {
                return Err(ModelError::InputShape {
                    scale: k,
                    got: s.to_vec(),
                    n_patch: shape0.get(1).copied().unwrap_or(0),
                });
            }
            batches[k] = s[0];
        }
        if batches.iter().any(|&b| b != batches[0]) {
            return Err(ModelError::BatchMismatch(batches));
        }
        let (batch, n_patch) = (shape0[0], shape0[1]);
        let offsets: Vec<usize> = (0..=batch).map(|b| b * n_patch).collect();
        let points = scales.map(|t| t.reshape(&[batch * n_patch, 3]).expect("checked shape"));
        Ok(Self {
            batch,
            n_patch,
            points,
            weights: [None, None, None],
            offsets: [offsets.clone(), offsets.clone(), offsets],
        })
    }

    /// Total rows the encoders will process.
    pub fn rows(&self) -> usize {
        self.points.iter().map(Tensor::rows).sum()
    }
}
