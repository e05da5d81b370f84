use super::gemm::{matmul, MatRef};
use super::ops::Activation;
use super::params::{Gradients, ParamId, ParamStore, RunningStatUpdate};
use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Batch-norm behaviour: batch statistics (train) or running statistics (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Kinds of recorded operations; used for error messages and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    Linear,
    BatchNorm,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    MaxPool,
    Concat,
    Mul,
    Add,
    Scale,
    Sum,
    Mean,
    Reshape,
    Transpose,
    Select,
    RowScalar,
}

impl OpKind {
    /// Every op with a backward rule.
    pub const DIFFERENTIABLE: [OpKind; 17] = [
        OpKind::Linear,
        OpKind::BatchNorm,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Softmax,
        OpKind::MaxPool,
        OpKind::Concat,
        OpKind::Mul,
        OpKind::Add,
        OpKind::Scale,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::Select,
        OpKind::RowScalar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Param => "param",
            OpKind::Linear => "linear",
            OpKind::BatchNorm => "batchnorm",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Softmax => "softmax",
            OpKind::MaxPool => "maxpool",
            OpKind::Concat => "concat",
            OpKind::Mul => "mul",
            OpKind::Add => "add",
            OpKind::Scale => "scale",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::Select => "select",
            OpKind::RowScalar => "row_scalar",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        std::iter::once(OpKind::Input)
            .chain(std::iter::once(OpKind::Param))
            .chain(Self::DIFFERENTIABLE)
            .find(|k| k.name() == name)
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        weights: Option<Vec<f64>>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        total_weight: f64,
        train: bool,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        widths: Vec<usize>,
    },
    Mul {
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Transpose {
        x: Var,
        b: usize,
        m: usize,
        n: usize,
    },
    Select {
        x: Var,
        index: usize,
        m: usize,
        n: usize,
    },
    RowScalar {
        x: Var,
        jac: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::Linear { .. } => OpKind::Linear,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::Act { kind, .. } => match kind {
                Activation::Relu => OpKind::Relu,
                Activation::Sigmoid => OpKind::Sigmoid,
                Activation::Tanh => OpKind::Tanh,
            },
            Op::Softmax { .. } => OpKind::Softmax,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Concat { .. } => OpKind::Concat,
            Op::Mul { .. } => OpKind::Mul,
            Op::Add { .. } => OpKind::Add,
            Op::Scale { .. } => OpKind::Scale,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Select { .. } => OpKind::Select,
            Op::RowScalar { .. } => OpKind::RowScalar,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param(_) => Vec::new(),
            Op::Linear { x, w, b } => vec![*x, *w, *b],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Mul { a, b, .. } | Op::Add { a, b } => vec![*a, *b],
            Op::Act { x, .. }
            | Op::Softmax { x, .. }
            | Op::MaxPool { x, .. }
            | Op::Scale { x, .. }
            | Op::Sum { x }
            | Op::Mean { x }
            | Op::Reshape { x }
            | Op::Transpose { x, .. }
            | Op::Select { x, .. }
            | Op::RowScalar { x, .. } => vec![*x],
        }
    }
}

struct Node {
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of one forward pass.
pub struct Tape<'s> {
    store: &'s ParamStore,
    mode: Mode,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    running_updates: Vec<RunningStatUpdate>,
    fault: Option<OpKind>,
}

/// Multiplier applied to the input gradients of a faulted op.
const FAULT_FACTOR: f64 = 1.5;

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self {
            store,
            mode,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            running_updates: Vec::new(),
            fault: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Deliberately corrupts the backward rule of one op kind. Test hook.
    #[doc(hidden)]
    pub fn set_backward_fault(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Records a constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Input,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: self.store.get(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite {
                op: op.kind().name(),
            });
        }
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn record_running_update(&mut self, update: RunningStatUpdate) {
        self.running_updates.push(update);
    }

    /// Running-statistic updates collected by train-mode batch norm, in recording order.
    pub fn take_running_updates(&mut self) -> Vec<RunningStatUpdate> {
        std::mem::take(&mut self.running_updates)
    }

    /// Reverse pass from a scalar `loss`, visiting nodes in exact reverse
    /// recording order. Parameters not reachable from `loss` get no entry
    /// (equivalent to a zero gradient).
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut out = Gradients {
            grads: vec![None; self.store.len()],
        };
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let factor = if Some(node.op.kind()) == self.fault {
                FAULT_FACTOR
            } else {
                1.0
            };
            if let Op::Param(id) = node.op {
                out.grads[id.0] = Some(g);
                continue;
            }
            let mut contribs: Vec<(Var, Tensor)> = Vec::new();
            self.node_backward(node, &g, &mut contribs);
            for (v, mut t) in contribs {
                if factor != 1.0 {
                    t.scale_in_place(factor);
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(out)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn node_backward(&self, node: &Node, g: &Tensor, out: &mut Vec<(Var, Tensor)>) {
        let y = node.value.as_ref().expect("op nodes carry values");
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (inp, outw) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.rows();
                if self.wants(*x) {
                    let mut dx = vec![0.0; rows * inp];
                    matmul(
                        MatRef::new(g.data(), rows, outw),
                        MatRef::new(wv.data(), inp, outw).t(),
                        &mut dx,
                        false,
                    );
                    out.push((*x, tensor(xv.shape(), dx)));
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; inp * outw];
                    matmul(
                        MatRef::new(xv.data(), rows, inp).t(),
                        MatRef::new(g.data(), rows, outw),
                        &mut dw,
                        false,
                    );
                    out.push((*w, tensor(wv.shape(), dw)));
                }
                if self.wants(*b) {
                    out.push((*b, tensor(&[outw], col_sums(g.data(), rows, outw, None))));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                weights,
                xhat,
                inv_std,
                total_weight,
                train,
            } => {
                let f = inv_std.len();
                let rows = g.len() / f;
                let gd = g.data();
                let dbeta = col_sums(gd, rows, f, None);
                let dgamma = col_sums(gd, rows, f, Some(xhat));
                if self.wants(*x) {
                    let gv = self.value(*gamma).data();
                    let mut dx = vec![0.0; rows * f];
                    for r in 0..rows {
                        let w = weights.as_ref().map_or(1.0, |w| w[r]);
                        for c in 0..f {
                            let k = r * f + c;
                            let scale = gv[c] * inv_std[c];
                            dx[k] = if *train {
                                scale
                                    * (gd[k]
                                        - w * dbeta[c] / total_weight
                                        - w * xhat[k] * dgamma[c] / total_weight)
                            } else {
                                scale * gd[k]
                            };
                        }
                    }
                    out.push((*x, tensor(g.shape(), dx)));
                }
                if self.wants(*gamma) {
                    out.push((*gamma, tensor(&[f], dgamma)));
                }
                if self.wants(*beta) {
                    out.push((*beta, tensor(&[f], dbeta)));
                }
            }
            Op::Act { x, kind } => {
                let dx = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&gi, &yi)| gi * kind.derivative_from_output(yi))
                    .collect();
                out.push((*x, tensor(g.shape(), dx)));
            }
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let (gd, yd) = (g.data(), y.data());
                let mut dx = vec![0.0; gd.len()];
                for o in 0..*outer {
                    for i in 0..*inner {
                        let idx = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..*len).map(|a| gd[idx(a)] * yd[idx(a)]).sum();
                        for a in 0..*len {
                            dx[idx(a)] = yd[idx(a)] * (gd[idx(a)] - dot);
                        }
                    }
                }
                out.push((*x, tensor(g.shape(), dx)));
            }
            Op::MaxPool { x, argmax } => {
                let xv = self.value(*x);
                let f = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (k, (&row, &gi)) in argmax.iter().zip(g.data()).enumerate() {
                    dx[row * f + k % f] += gi;
                }
                out.push((*x, tensor(xv.shape(), dx)));
            }
            Op::Concat { inputs, widths } => {
                let total: usize = widths.iter().sum();
                let rows = g.len() / total;
                let mut start = 0;
                for (v, &w) in inputs.iter().zip(widths) {
                    if self.wants(*v) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + start..r * total + start + w]);
                        }
                        out.push((*v, tensor(self.shape(*v), d)));
                    }
                    start += w;
                }
            }
            Op::Mul { a, b, broadcast } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let gd = g.data();
                if self.wants(*a) {
                    let f = bv.len();
                    let da = gd
                        .iter()
                        .enumerate()
                        .map(|(k, gi)| gi * bv.data()[if *broadcast { k % f } else { k }])
                        .collect();
                    out.push((*a, tensor(av.shape(), da)));
                }
                if self.wants(*b) {
                    let prod: Vec<f64> = gd.iter().zip(av.data()).map(|(gi, ai)| gi * ai).collect();
                    let db = if *broadcast {
                        let f = bv.len();
                        col_sums(&prod, prod.len() / f, f, None)
                    } else {
                        prod
                    };
                    out.push((*b, tensor(bv.shape(), db)));
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if self.wants(*v) {
                        out.push((*v, g.clone()));
                    }
                }
            }
            Op::Scale { x, c } => {
                let mut d = g.clone();
                d.scale_in_place(*c);
                out.push((*x, d));
            }
            Op::Sum { x } | Op::Mean { x } => {
                let xv = self.value(*x);
                let c = if matches!(node.op, Op::Mean { .. }) {
                    g.item() / xv.len() as f64
                } else {
                    g.item()
                };
                out.push((*x, Tensor::filled(xv.shape(), c)));
            }
            Op::Reshape { x } => {
                let d = g.clone().reshape(self.shape(*x)).expect("same element count");
                out.push((*x, d));
            }
            Op::Transpose { x, b, m, n } => {
                // y[b, j, i] = x[b, i, j]
                let gd = g.data();
                let mut d = vec![0.0; gd.len()];
                for bb in 0..*b {
                    for i in 0..*m {
                        for j in 0..*n {
                            d[(bb * m + i) * n + j] = gd[(bb * n + j) * m + i];
                        }
                    }
                }
                out.push((*x, tensor(&[*b, *m, *n], d)));
            }
            Op::Select { x, index, m, n } => {
                let rows = g.len() / n;
                let mut d = vec![0.0; rows * m * n];
                for r in 0..rows {
                    let dst = (r * m + index) * n;
                    d[dst..dst + n].copy_from_slice(&g.data()[r * n..(r + 1) * n]);
                }
                out.push((*x, tensor(&[rows, *m, *n], d)));
            }
            Op::RowScalar { x, jac } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let d = jac
                    .iter()
                    .enumerate()
                    .map(|(k, j)| j * g.data()[k / c])
                    .collect();
                out.push((*x, tensor(xv.shape(), d)));
            }
        }
    }
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("backward shapes are consistent")
}

/// Column sums of a row-major `rows x cols` buffer, optionally of `a ⊙ b`.
pub(crate) fn col_sums(a: &[f64], rows: usize, cols: usize, times: Option<&[f64]>) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        match times {
            Some(t) => {
                let trow = &t[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    s[c] += row[c] * trow[c];
                }
            }
            None => {
                for c in 0..cols {
                    s[c] += row[c];
                }
            }
        }
    }
    s
}
