use super::gemm::{matmul, MatRef};
use super::params::{ParamId, RunningStatUpdate};
use super::tape::{Mode, Op, Tape, Var};
use super::{AutodiffError, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl Tape<'_> {
    /// `y = x W + b` over the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.rank() != 2 || xv.rank() == 0 || xv.cols() != wv.shape()[0] {
            return Err(shape_err("linear", xv.shape(), wv.shape()));
        }
        let (inp, outw) = (wv.shape()[0], wv.shape()[1]);
        if bv.shape() != [outw] {
            return Err(shape_err("linear", wv.shape(), bv.shape()));
        }
        let rows = xv.rows();
        let mut y = Vec::with_capacity(rows * outw);
        for _ in 0..rows {
            y.extend_from_slice(bv.data());
        }
        matmul(
            MatRef::new(xv.data(), rows, inp),
            MatRef::new(wv.data(), inp, outw),
            &mut y,
            true,
        );
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = outw;
        self.push(Tensor::new(shape, y)?, Op::Linear { x, w, b })
    }

    /// Linear layer from stored parameters.
    pub fn linear_p(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var, AutodiffError> {
        let (w, b) = (self.param(w), self.param(b));
        self.linear(x, w, b)
    }

    /// Batch normalization over the rows of a `[rows, feat]` tensor.
    ///
    /// `weights` gives each row a multiplicity: statistics are computed as if
    /// row `r` appeared `weights[r]` times, and the gradient that arrives at
    /// row `r` is understood as the sum over those copies.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        weights: Option<&[f64]>,
    ) -> Result<Var, AutodiffError> {
        let store = self.store();
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(shape_err("batchnorm", xv.shape(), &[]));
        }
        let (rows, f) = (xv.shape()[0], xv.shape()[1]);
        for id in [gamma, beta, running_mean, running_var] {
            if store.value(id).shape() != [f] {
                return Err(shape_err("batchnorm", xv.shape(), store.value(id).shape()));
            }
        }
        if let Some(w) = weights {
            if w.len() != rows || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(shape_err("batchnorm", xv.shape(), &[w.len()]));
            }
        }
        let train = self.mode() == Mode::Train;
        let xd = xv.data();
        let total_weight = weights.map_or(rows as f64, |w| w.iter().sum());
        let (mean, var) = if train {
            if total_weight < 2.0 {
                return Err(AutodiffError::BatchTooSmall(total_weight as usize));
            }
            let mut mean = vec![0.0; f];
            for r in 0..rows {
                let w = weights.map_or(1.0, |w| w[r]);
                for c in 0..f {
                    mean[c] += w * xd[r * f + c];
                }
            }
            mean.iter_mut().for_each(|m| *m /= total_weight);
            let mut var = vec![0.0; f];
            for r in 0..rows {
                let w = weights.map_or(1.0, |w| w[r]);
                for c in 0..f {
                    let d = xd[r * f + c] - mean[c];
                    var[c] += w * d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= total_weight);
            (mean, var)
        } else {
            (
                store.value(running_mean).data().to_vec(),
                store.value(running_var).data().to_vec(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gv, bv) = (store.value(gamma).data(), store.value(beta).data());
        let mut xhat = vec![0.0; rows * f];
        let mut y = vec![0.0; rows * f];
        for r in 0..rows {
            for c in 0..f {
                let k = r * f + c;
                xhat[k] = (xd[k] - mean[c]) * inv_std[c];
                y[k] = gv[c] * xhat[k] + bv[c];
            }
        }
        let mut updates = Vec::new();
        if train {
            let m = BN_MOMENTUM;
            let unbias = total_weight / (total_weight - 1.0);
            let rm = store.value(running_mean).data();
            let rv = store.value(running_var).data();
            let new_mean = rm.iter().zip(&mean).map(|(r, b)| (1.0 - m) * r + m * b).collect();
            let new_var = rv
                .iter()
                .zip(&var)
                .map(|(r, b)| (1.0 - m) * r + m * b * unbias)
                .collect();
            updates.push(RunningStatUpdate {
                id: running_mean,
                value: Tensor::new(vec![f], new_mean)?,
            });
            updates.push(RunningStatUpdate {
                id: running_var,
                value: Tensor::new(vec![f], new_var)?,
            });
        }
        let shape = xv.shape().to_vec();
        for u in updates {
            self.record_running_update(u);
        }
        let (gamma, beta) = (self.param(gamma), self.param(beta));
        self.push(
            Tensor::new(shape, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                weights: weights.map(<[f64]>::to_vec),
                xhat,
                inv_std,
                total_weight,
                train,
            },
        )
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let y = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let t = Tensor::new(xv.shape().to_vec(), y)?;
        self.push(t, Op::Act { x, kind })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.activation(x, Activation::Tanh)
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let shape = xv.shape();
        if axis >= shape.len() {
            return Err(AutodiffError::BadAxis {
                axis,
                rank: shape.len(),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = xv.data();
        let mut y = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * len + a) * inner + i;
                let m = (0..len).map(|a| xd[idx(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for a in 0..len {
                    let e = (xd[idx(a)] - m).exp();
                    y[idx(a)] = e;
                    s += e;
                }
                for a in 0..len {
                    y[idx(a)] /= s;
                }
            }
        }
        let t = Tensor::new(shape.to_vec(), y)?;
        self.push(t, Op::Softmax { x, outer, len, inner })
    }

    /// Per-feature max over the points axis of `[batch, points, feat]`.
    pub fn maxpool_points(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(shape_err("maxpool", &shape, &[]));
        }
        let offsets: Vec<usize> = (0..=shape[0]).map(|b| b * shape[1]).collect();
        let flat = self.reshape(x, &[shape[0] * shape[1], shape[2]])?;
        self.maxpool_segments(flat, &offsets)
    }

    /// Per-feature max over row segments `offsets[s]..offsets[s+1]` of a
    /// `[rows, feat]` tensor. Ties go to the lowest row.
    pub fn maxpool_segments(&mut self, x: Var, offsets: &[usize]) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(shape_err("maxpool", xv.shape(), &[]));
        }
        let (rows, f) = (xv.shape()[0], xv.shape()[1]);
        let valid = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == rows
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(AutodiffError::BadSegments { rows });
        }
        let segs = offsets.len() - 1;
        let xd = xv.data();
        let mut y = vec![0.0; segs * f];
        let mut argmax = vec![0; segs * f];
        for s in 0..segs {
            for c in 0..f {
                let mut best = offsets[s];
                for r in offsets[s] + 1..offsets[s + 1] {
                    if xd[r * f + c] > xd[best * f + c] {
                        best = r;
                    }
                }
                y[s * f + c] = xd[best * f + c];
                argmax[s * f + c] = best;
            }
        }
        self.push(Tensor::new(vec![segs, f], y)?, Op::MaxPool { x, argmax })
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.shape(*inputs.first().ok_or(AutodiffError::BadSegments { rows: 0 })?).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.shape(v);
            if s.is_empty() || &s[..s.len() - 1] != lead {
                return Err(shape_err("concat", &first, s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut y = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in inputs.iter().zip(&widths) {
                y.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        self.push(
            Tensor::new(shape, y)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                widths,
            },
        )
    }

    /// Element-wise product; `b` may also be a `[feat]` vector broadcast over rows.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let broadcast = if av.shape() == bv.shape() {
            false
        } else if bv.shape() == [av.cols()] && av.rank() >= 1 {
            true
        } else {
            return Err(shape_err("mul", av.shape(), bv.shape()));
        };
        let f = bv.len();
        let y = av
            .data()
            .iter()
            .enumerate()
            .map(|(k, x)| x * bv.data()[if broadcast { k % f } else { k }])
            .collect();
        let t = Tensor::new(av.shape().to_vec(), y)?;
        self.push(t, Op::Mul { a, b, broadcast })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av.shape(), bv.shape()));
        }
        let y = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(av.shape().to_vec(), y)?;
        self.push(t, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        let mut t = self.value(x).clone();
        t.scale_in_place(c);
        self.push(t, Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean { x })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape { x })
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn transpose12(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let &[b, m, n] = xv.shape() else {
            return Err(shape_err("transpose", xv.shape(), &[]));
        };
        let xd = xv.data();
        let mut y = vec![0.0; xd.len()];
        for bb in 0..b {
            for i in 0..m {
                for j in 0..n {
                    y[(bb * n + j) * m + i] = xd[(bb * m + i) * n + j];
                }
            }
        }
        self.push(Tensor::new(vec![b, n, m], y)?, Op::Transpose { x, b, m, n })
    }

    /// `x[:, index, :]` of a rank-3 tensor.
    pub fn select1(&mut self, x: Var, index: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let &[b, m, n] = xv.shape() else {
            return Err(shape_err("select", xv.shape(), &[]));
        };
        if index >= m {
            return Err(AutodiffError::BadAxis { axis: index, rank: m });
        }
        let mut y = Vec::with_capacity(b * n);
        for bb in 0..b {
            let s = (bb * m + index) * n;
            y.extend_from_slice(&xv.data()[s..s + n]);
        }
        self.push(Tensor::new(vec![b, n], y)?, Op::Select { x, index, m, n })
    }

    /// Records a row-wise scalar function `y_r = f(x_r)` whose values and
    /// row gradients `∂y_r/∂x_r` were computed by the caller.
    pub fn row_scalar(&mut self, x: Var, values: Vec<f64>, jac: Vec<f64>) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 || values.len() != xv.rows() || jac.len() != xv.len() {
            return Err(shape_err("row_scalar", xv.shape(), &[values.len(), jac.len()]));
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "row_scalar" });
        }
        let n = values.len();
        self.push(Tensor::new(vec![n], values)?, Op::RowScalar { x, jac })
    }
}
