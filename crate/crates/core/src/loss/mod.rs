//! Feature-preserving training objective: a normal-weighted projection term
//! plus a repulsion term, applied to every pre-offset and to the final
//! displacement.

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::geom::{dist2, GroundTruthPatch, N_SCALES};
use crate::model::ForwardVars;
use crate::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("degenerate ground-truth patch")]
    DegenerateGroundTruth,
    #[error("ground-truth patch is empty")]
    EmptyGroundTruth,
    #[error("invalid loss config: {0}")]
    Config(String),
    #[error("batch has {rows} rows but {gt} ground-truth entries")]
    BatchMismatch { rows: usize, gt: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the projection term against the repulsion term.
    pub alpha: f64,
    /// Weight of the pre-offset supervision.
    pub beta: f64,
    /// Normal support angle in degrees.
    pub support_angle_deg: f64,
    /// Cap on final ground-truth patch size.
    pub m_final: usize,
    /// Final ground-truth radius as a fraction of the bounding-box diagonal.
    pub r_final_frac: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.97,
            beta: 0.2,
            support_angle_deg: 15.0,
            m_final: 500,
            r_final_frac: 0.05,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: &str| Err(LossError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be nonnegative");
        }
        if !(self.support_angle_deg > 0.0 && self.support_angle_deg <= 180.0) {
            return bad("support angle must lie in (0, 180]");
        }
        if self.m_final == 0 {
            return bad("m_final must be positive");
        }
        if !(self.r_final_frac > 0.0) {
            return bad("r_final_frac must be positive");
        }
        Ok(())
    }

    /// `1 - cos(support angle)`.
    pub fn support_denominator(&self) -> f64 {
        1.0 - self.support_angle_deg.to_radians().cos()
    }
}

/// A loss value and its gradient with respect to the displaced point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoss {
    pub value: f64,
    pub grad: Vec3,
}

/// Spatial bandwidth `4 sqrt(dobb / m)`.
pub fn spatial_bandwidth(gt: &GroundTruthPatch) -> f64 {
    4.0 * (gt.dobb / gt.m() as f64).sqrt()
}

fn nearest(p: &Vec3, gt: &GroundTruthPatch) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, q) in gt.points.iter().enumerate() {
        let d = dist2(p, q);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Spatial and normal weights `φ_j·θ_j`, stored as `scaled[j]·exp(log_scale)`
/// so the largest scaled weight is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    pub scaled: Vec<f64>,
    pub log_scale: f64,
}

impl ProjectionWeights {
    /// `Σ_j φ_j·θ_j`; may underflow to zero where the scaled form does not.
    pub fn denominator(&self) -> f64 {
        self.scaled.iter().sum::<f64>() * self.log_scale.exp()
    }
}

pub fn projection_weights(p: &Vec3, gt: &GroundTruthPatch, cfg: &LossConfig) -> Result<ProjectionWeights, LossError> {
    let m = gt.m();
    if m == 0 {
        return Err(LossError::EmptyGroundTruth);
    }
    if !(gt.dobb > 0.0) {
        return Err(LossError::DegenerateGroundTruth);
    }
    let eps2 = 16.0 * gt.dobb / m as f64;
    let denom = cfg.support_denominator();
    let n_p = gt.normals[nearest(p, gt)];
    let logw: Vec<f64> = (0..m)
        .map(|j| -dist2(p, &gt.points[j]) / eps2 - (1.0 - n_p.dot(&gt.normals[j])) / denom)
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ProjectionWeights {
        scaled: logw.iter().map(|lw| (lw - top).exp()).collect(),
        log_scale: top,
    })
}

/// Weighted mean of tangent-plane residuals `|(p - p_j)·n_j|`. The weights
/// combine spatial proximity and agreement with the normal of the ground-truth
/// point nearest to `p`; that normal is held constant when differentiating.
pub fn projection_loss(p: &Vec3, gt: &GroundTruthPatch, cfg: &LossConfig) -> Result<PointLoss, LossError> {
    let m = gt.m();
    if m == 0 {
        return Err(LossError::EmptyGroundTruth);
    }
    let residual = |j: usize| {
        let r = (p - gt.points[j]).dot(&gt.normals[j]);
        // d|r|/dp, with zero subgradient at r = 0
        let g = if r > 0.0 {
            gt.normals[j]
        } else if r < 0.0 {
            -gt.normals[j]
        } else {
            Vec3::zeros()
        };
        (r.abs(), g)
    };
    if m == 1 {
        // a single term: the weights cancel exactly
        let (a, g) = residual(0);
        return Ok(PointLoss { value: a, grad: g });
    }
    let eps2 = 16.0 * gt.dobb / m as f64;
    let weights = projection_weights(p, gt, cfg)?;
    let mut wsum = 0.0;
    let mut num = 0.0;
    let mut terms = Vec::with_capacity(m);
    for (j, &w) in weights.scaled.iter().enumerate() {
        let (a, ga) = residual(j);
        wsum += w;
        num += w * a;
        terms.push((w, a, ga));
    }
    let value = num / wsum;
    let mut grad = Vec3::zeros();
    for (j, (w, a, ga)) in terms.into_iter().enumerate() {
        let dw = (p - gt.points[j]) * (-2.0 / eps2);
        grad += (ga + dw * (a - value)) * w;
    }
    Ok(PointLoss {
        value,
        grad: grad / wsum,
    })
}

/// Distance to the farthest ground-truth point; the subgradient goes to the
/// lowest-index maximizer.
pub fn repulsion_loss(p: &Vec3, gt: &GroundTruthPatch) -> Result<PointLoss, LossError> {
    let mut best: Option<(f64, usize)> = None;
    for (j, q) in gt.points.iter().enumerate() {
        let d = dist2(p, q);
        if best.map_or(true, |(b, _)| d > b) {
            best = Some((d, j));
        }
    }
    let (d2, j) = best.ok_or(LossError::EmptyGroundTruth)?;
    let value = d2.sqrt();
    let grad = if value > 0.0 {
        (p - gt.points[j]) / value
    } else {
        Vec3::zeros()
    };
    Ok(PointLoss { value, grad })
}

/// Projection, repulsion, and their blend for one displaced point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchLoss {
    pub l_s: f64,
    pub l_r: f64,
    pub l_p: f64,
    pub grad: Vec3,
}

pub fn patch_loss(p: &Vec3, gt: &GroundTruthPatch, cfg: &LossConfig) -> Result<PatchLoss, LossError> {
    let s = projection_loss(p, gt, cfg)?;
    let r = repulsion_loss(p, gt)?;
    let a = cfg.alpha;
    Ok(PatchLoss {
        l_s: s.value,
        l_r: r.value,
        l_p: a * s.value + (1.0 - a) * r.value,
        grad: s.grad * a + r.grad * (1.0 - a),
    })
}

/// Ground truth for one training patch: one entry per scale plus the final patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTargets {
    pub scales: [GroundTruthPatch; N_SCALES],
    pub fin: GroundTruthPatch,
}

/// Batch means of every loss component. Index `N_SCALES` of `l_s`/`l_r` is the final patch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_s: [f64; N_SCALES + 1],
    pub l_r: [f64; N_SCALES + 1],
    pub l_p: [f64; N_SCALES],
    pub l_dp: f64,
    pub l_final: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_s
            .iter()
            .chain(&self.l_r)
            .chain(&self.l_p)
            .chain([&self.l_dp, &self.l_final, &self.l_total])
            .all(|v| v.is_finite())
    }

    /// Element-wise `self += other * c`.
    pub fn add_scaled(&mut self, other: &LossBreakdown, c: f64) {
        for (a, b) in self.l_s.iter_mut().zip(&other.l_s) {
            *a += b * c;
        }
        for (a, b) in self.l_r.iter_mut().zip(&other.l_r) {
            *a += b * c;
        }
        for (a, b) in self.l_p.iter_mut().zip(&other.l_p) {
            *a += b * c;
        }
        self.l_dp += other.l_dp * c;
        self.l_final += other.l_final * c;
        self.l_total += other.l_total * c;
    }
}

fn row_point(data: &[f64], b: usize) -> Vec3 {
    Vec3::new(data[3 * b], data[3 * b + 1], data[3 * b + 2])
}

/// Per-row patch losses of a `[batch, 3]` displacement tensor.
fn rows_loss<'a>(
    dp: &[f64],
    gts: impl Iterator<Item = &'a GroundTruthPatch>,
    cfg: &LossConfig,
) -> Result<Vec<PatchLoss>, LossError> {
    gts.enumerate()
        .map(|(b, gt)| patch_loss(&row_point(dp, b), gt, cfg))
        .collect()
}

/// Loss values for plain displacement tensors, without a tape.
pub fn loss_values(
    pre_offsets: &[&[f64]; N_SCALES],
    dp: &[f64],
    targets: &[PatchTargets],
    cfg: &LossConfig,
) -> Result<LossBreakdown, LossError> {
    Ok(evaluate(pre_offsets, dp, targets, cfg)?.0)
}

type RowLosses = ([Vec<PatchLoss>; N_SCALES], Vec<PatchLoss>);

fn evaluate(
    pre_offsets: &[&[f64]; N_SCALES],
    dp: &[f64],
    targets: &[PatchTargets],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, RowLosses), LossError> {
    cfg.validate()?;
    let rows = dp.len() / 3;
    if rows != targets.len() || rows == 0 || pre_offsets.iter().any(|p| p.len() != dp.len()) {
        return Err(LossError::BatchMismatch {
            rows,
            gt: targets.len(),
        });
    }
    let mut per_scale: [Vec<PatchLoss>; N_SCALES] = Default::default();
    for k in 0..N_SCALES {
        per_scale[k] = rows_loss(pre_offsets[k], targets.iter().map(|t| &t.scales[k]), cfg)?;
    }
    let fin = rows_loss(dp, targets.iter().map(|t| &t.fin), cfg)?;
    let n = rows as f64;
    let mut out = LossBreakdown::default();
    for b in 0..rows {
        let mut l_dp = 0.0;
        for k in 0..N_SCALES {
            let l = per_scale[k][b];
            out.l_s[k] += l.l_s / n;
            out.l_r[k] += l.l_r / n;
            out.l_p[k] += l.l_p / n;
            l_dp += l.l_p;
        }
        let f = fin[b];
        out.l_s[N_SCALES] += f.l_s / n;
        out.l_r[N_SCALES] += f.l_r / n;
        out.l_dp += l_dp / n;
        out.l_final += f.l_p / n;
        out.l_total += (cfg.beta * l_dp + f.l_p) / n;
    }
    Ok((out, (per_scale, fin)))
}

/// Records `mean_b(β·Σ_k L_p(pre_k) + L_p(dp))` on the tape; returns the scalar
/// loss node and its breakdown.
pub fn total_loss(
    tape: &mut Tape<'_>,
    vars: &ForwardVars,
    targets: &[PatchTargets],
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown), LossError> {
    let pre: [Vec<f64>; N_SCALES] = vars.pre_offsets.map(|v| tape.value(v).data().to_vec());
    let dp = tape.value(vars.dp).data().to_vec();
    let (breakdown, (per_scale, fin)) = evaluate(&[&pre[0], &pre[1], &pre[2]], &dp, targets, cfg)?;
    let record = |tape: &mut Tape<'_>, x: Var, losses: &[PatchLoss]| {
        let values = losses.iter().map(|l| l.l_p).collect();
        let jac = losses.iter().flat_map(|l| [l.grad.x, l.grad.y, l.grad.z]).collect();
        tape.row_scalar(x, values, jac)
    };
    let mut l_dp: Option<Var> = None;
    for k in 0..N_SCALES {
        let l = record(tape, vars.pre_offsets[k], &per_scale[k])?;
        l_dp = Some(match l_dp {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let l_dp = tape.scale(l_dp.expect("three scales"), cfg.beta)?;
    let l_final = record(tape, vars.dp, &fin)?;
    let per_row = tape.add(l_dp, l_final)?;
    let total = tape.mean(per_row)?;
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = LossConfig::default();
        assert_eq!((c.alpha, c.beta, c.m_final, c.r_final_frac), (0.97, 0.2, 500, 0.05));
        assert!((c.support_denominator() - 0.0340742).abs() < 1e-7);
        assert!(LossConfig { alpha: 1.5, ..c }.validate().is_err());
    }
}
