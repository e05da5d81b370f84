//! Central finite-difference checks of the backward rules.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{AutodiffError, Mode, OpKind, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{stream, Rng};

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// One-sided slopes further apart than this mark a kink inside the stencil.
const KINK_GAP: f64 = 1e-5;
/// Step shrinks (by 10x each) tried before falling back to one-sided slopes.
const KINK_REFINEMENTS: usize = 3;

/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Which coordinates of each trainable tensor get perturbed.
pub enum Coords<'a> {
    All,
    /// Up to `n` coordinates per tensor, drawn without replacement.
    Sample(usize, &'a mut Rng),
}

/// Compares the tape gradient of the scalar built by `build` against central
/// differences for every trainable parameter in `store`. Returns the largest
/// relative error. Where the two one-sided slopes disagree, the step shrinks;
/// if they still disagree the closer one-sided slope is used.
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    mode: Mode,
    fault: Option<OpKind>,
    h: f64,
    mut coords: Coords<'_>,
    build: F,
) -> Result<f64, AutodiffError>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, AutodiffError>,
{
    let grads = {
        let mut tape = Tape::new(store, mode);
        tape.set_backward_fault(fault);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new(store, mode);
        let loss = build(&mut tape)?;
        Ok(tape.value(loss).item())
    };
    let f0 = eval(store)?;
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
    let mut worst = 0.0f64;
    for id in ids {
        let n = store.value(id).len();
        let picked: Vec<usize> = match &mut coords {
            Coords::All => (0..n).collect(),
            Coords::Sample(k, rng) => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(*rng);
                all.truncate(*k);
                all
            }
        };
        for c in picked {
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[c]);
            let orig = store.value(id).data()[c];
            let mut probe = |step: f64| -> Result<(f64, f64, f64), AutodiffError> {
                store.get_mut(id).value.data_mut()[c] = orig + step;
                let fp = eval(store);
                store.get_mut(id).value.data_mut()[c] = orig - step;
                let fm = eval(store);
                store.get_mut(id).value.data_mut()[c] = orig;
                let (fp, fm) = (fp?, fm?);
                Ok(((fp - fm) / (2.0 * step), (fp - f0) / step, (f0 - fm) / step))
            };
            let (central, up, down) = probe(h)?;
            let gap = relative_error(up, down);
            let mut err = relative_error(analytic, central);
            if gap > KINK_GAP {
                // curvature shrinks the one-sided gap with the step, a ReLU or
                // max switch inside the stencil does not
                let (mut step, mut prev_gap) = (h, gap);
                for _ in 0..KINK_REFINEMENTS {
                    step *= 0.1;
                    let (c2, u2, d2) = probe(step)?;
                    let g2 = relative_error(u2, d2);
                    if g2 <= KINK_GAP || g2 < 0.5 * prev_gap {
                        err = relative_error(analytic, c2);
                        break;
                    }
                    prev_gap = g2;
                    // the tape returns one of the one-sided derivatives at a kink
                    err = relative_error(analytic, u2).min(relative_error(analytic, d2));
                }
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Outcome of the randomized check of one op.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: OpKind,
    pub trials: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn op_tolerance(kind: OpKind) -> f64 {
    if kind == OpKind::BatchNorm {
        1e-5
    } else {
        1e-6
    }
}

type Build = Box<dyn for<'a> Fn(&mut Tape<'a>) -> Result<Var, AutodiffError>>;

fn uniform(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for the relu kink.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape, 0.01, 1.0);
    for v in t.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Distinct values at least 0.01 apart, so no finite-difference step crosses
/// an argmax switch.
fn well_separated(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut levels: Vec<f64> = (0..n).map(|i| i as f64 * 0.02 - 0.01 * n as f64).collect();
    levels.shuffle(rng);
    let data = levels.into_iter().map(|v| v + rng.gen_range(-0.004..0.004)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Weighted sum `Σ y ⊙ proj`, turning any op output into a scalar.
fn project(t: &mut Tape<'_>, y: Var, proj: &Tensor) -> Result<Var, AutodiffError> {
    let p = t.input(proj.clone());
    let m = t.mul(y, p)?;
    t.sum(m)
}

fn random_trial(kind: OpKind, rng: &mut Rng) -> (ParamStore, Build, Mode) {
    let mut store = ParamStore::new();
    let mut mode = Mode::Train;
    let rows = rng.gen_range(2..7);
    let cols = rng.gen_range(1..6);
    let build: Build = match kind {
        OpKind::Linear => {
            let out = rng.gen_range(1..5);
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let w = store.add("w", uniform(rng, &[cols, out], -1.0, 1.0), true);
            let b = store.add("b", uniform(rng, &[out], -1.0, 1.0), true);
            let proj = uniform(rng, &[rows, out], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.linear_p(xv, w, b)?;
                project(t, y, &proj)
            })
        }
        OpKind::BatchNorm => {
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let g = store.add("gamma", uniform(rng, &[cols], 0.5, 1.5), true);
            let b = store.add("beta", uniform(rng, &[cols], -0.5, 0.5), true);
            let rm = store.add("rm", uniform(rng, &[cols], -0.2, 0.2), false);
            let rv = store.add("rv", uniform(rng, &[cols], 0.5, 1.5), false);
            if rng.gen_bool(0.25) {
                mode = Mode::Eval;
            }
            let weights: Option<Vec<f64>> = rng
                .gen_bool(0.5)
                .then(|| (0..rows).map(|_| f64::from(rng.gen_range(1..5u32))).collect());
            let proj = uniform(rng, &[rows, cols], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.batchnorm(xv, g, b, rm, rv, weights.as_deref())?;
                project(t, y, &proj)
            })
        }
        OpKind::Relu | OpKind::Sigmoid | OpKind::Tanh => {
            let x = store.add("x", away_from_zero(rng, &[rows, cols]), true);
            let proj = uniform(rng, &[rows, cols], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = match kind {
                    OpKind::Relu => t.relu(xv)?,
                    OpKind::Sigmoid => t.sigmoid(xv)?,
                    _ => t.tanh(xv)?,
                };
                project(t, y, &proj)
            })
        }
        OpKind::Softmax => {
            let shape = [rows, cols, rng.gen_range(1..4)];
            let axis = rng.gen_range(0..3);
            let x = store.add("x", uniform(rng, &shape, -2.0, 2.0), true);
            let proj = uniform(rng, &shape, -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.softmax(xv, axis)?;
                project(t, y, &proj)
            })
        }
        OpKind::MaxPool => {
            let pts = rng.gen_range(1..8);
            let x = store.add("x", well_separated(rng, &[rows, pts, cols]), true);
            let proj = uniform(rng, &[rows, cols], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.maxpool_points(xv)?;
                project(t, y, &proj)
            })
        }
        OpKind::Concat => {
            let k = rng.gen_range(1..4);
            let ids: Vec<ParamId> = (0..k)
                .map(|i| {
                    let w = rng.gen_range(1..4);
                    store.add(format!("x{i}"), uniform(rng, &[rows, w], -1.0, 1.0), true)
                })
                .collect();
            let total: usize = ids.iter().map(|&id| store.value(id).cols()).sum();
            let proj = uniform(rng, &[rows, total], -1.0, 1.0);
            Box::new(move |t| {
                let vars: Vec<Var> = ids.iter().map(|&id| t.param(id)).collect();
                let y = t.concat(&vars)?;
                project(t, y, &proj)
            })
        }
        OpKind::Mul | OpKind::Add => {
            let broadcast = kind == OpKind::Mul && rng.gen_bool(0.5);
            let a = store.add("a", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let bshape: Vec<usize> = if broadcast { vec![cols] } else { vec![rows, cols] };
            let b = store.add("b", uniform(rng, &bshape, -1.0, 1.0), true);
            let proj = uniform(rng, &[rows, cols], -1.0, 1.0);
            Box::new(move |t| {
                let (av, bv) = (t.param(a), t.param(b));
                let y = if kind == OpKind::Mul { t.mul(av, bv)? } else { t.add(av, bv)? };
                project(t, y, &proj)
            })
        }
        OpKind::Scale => {
            let c = rng.gen_range(-2.0..2.0);
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let proj = uniform(rng, &[rows, cols], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.scale(xv, c)?;
                project(t, y, &proj)
            })
        }
        OpKind::Sum | OpKind::Mean => {
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            // square first so the reduction's input gradient is not constant
            Box::new(move |t| {
                let xv = t.param(x);
                let sq = t.mul(xv, xv)?;
                if kind == OpKind::Sum {
                    t.sum(sq)
                } else {
                    t.mean(sq)
                }
            })
        }
        OpKind::Reshape => {
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let proj = uniform(rng, &[cols, rows], -1.0, 1.0);
            Box::new(move |t| {
                let xv = t.param(x);
                let y = t.reshape(xv, &[cols, rows])?;
                project(t, y, &proj)
            })
        }
        OpKind::Transpose | OpKind::Select => {
            let n = rng.gen_range(1..4);
            let x = store.add("x", uniform(rng, &[rows, cols, n], -1.0, 1.0), true);
            let index = rng.gen_range(0..cols);
            let proj = if kind == OpKind::Transpose {
                uniform(rng, &[rows, n, cols], -1.0, 1.0)
            } else {
                uniform(rng, &[rows, n], -1.0, 1.0)
            };
            Box::new(move |t| {
                let xv = t.param(x);
                let y = if kind == OpKind::Transpose {
                    t.transpose12(xv)?
                } else {
                    t.select1(xv, index)?
                };
                project(t, y, &proj)
            })
        }
        OpKind::RowScalar => {
            let x = store.add("x", uniform(rng, &[rows, cols], -1.0, 1.0), true);
            let proj = uniform(rng, &[rows], -1.0, 1.0);
            // f(x_r) = Σ_c sin(x_rc) · x_rc
            Box::new(move |t| {
                let xv = t.param(x);
                let data = t.value(xv).data().to_vec();
                let c = t.value(xv).cols();
                let values = data.chunks(c).map(|r| r.iter().map(|v| v.sin() * v).sum()).collect();
                let jac = data.iter().map(|v| v.cos() * v + v.sin()).collect();
                let y = t.row_scalar(xv, values, jac)?;
                project(t, y, &proj)
            })
        }
        OpKind::Input | OpKind::Param => Box::new(|t| {
            let z = t.input(Tensor::scalar(0.0));
            t.sum(z)
        }),
    };
    (store, build, mode)
}

/// Runs `trials` random-shape finite-difference checks of one op.
pub fn check_op(
    kind: OpKind,
    trials: usize,
    seed: u64,
    fault: Option<OpKind>,
) -> Result<OpCheck, AutodiffError> {
    let mut rng = stream(seed, &[0x6772_6164, kind as u64]);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (mut store, build, mode) = random_trial(kind, &mut rng);
        let err = finite_difference_check(&mut store, mode, fault, FD_STEP, Coords::All, build)?;
        worst = worst.max(err);
    }
    Ok(OpCheck {
        op: kind,
        trials,
        max_rel_err: worst,
        tolerance: op_tolerance(kind),
    })
}

/// [`check_op`] over every differentiable op.
pub fn check_all_ops(trials: usize, seed: u64, fault: Option<OpKind>) -> Result<Vec<OpCheck>, AutodiffError> {
    OpKind::DIFFERENTIABLE
        .iter()
        .map(|&k| check_op(k, trials, seed, fault))
        .collect()
}
