use super::{AutodiffError, Tensor};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

/// Named, ordered collection of parameters. Non-trainable entries hold
/// state such as batch-norm running statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Adds a gradient set (from one tape) into the stored grads.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            if let (true, Some(g)) = (p.trainable, g) {
                p.grad.add_assign(g);
            }
        }
    }

    /// Euclidean norm over all trainable gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.grad.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let c = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| p.trainable) {
                p.grad.scale_in_place(c);
            }
        }
        norm
    }

    pub fn apply_running_updates(&mut self, updates: &[RunningStatUpdate]) {
        for u in updates {
            self.params[u.id.0].value = u.value.clone();
        }
    }

    pub fn num_trainable_values(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Sums gradient sets in order.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }
}

/// New value for a non-trainable state tensor, recorded by train-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStatUpdate {
    pub id: ParamId,
    pub value: Tensor,
}

/// `θ ← θ − lr·grad` for trainable parameters, then zeroes all grads.
/// `lr = 0` leaves values untouched.
pub fn sgd_step(store: &mut ParamStore, lr: f64) -> Result<(), AutodiffError> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(AutodiffError::BadLearningRate(lr));
    }
    for p in &mut store.params {
        if p.trainable && lr > 0.0 {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= lr * g;
            }
        }
        p.grad.data_mut().fill(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar_step() {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(1.0), true);
        s.get_mut(id).grad = Tensor::scalar(2.0);
        sgd_step(&mut s, 0.1).unwrap();
        assert!((s.value(id).item() - 0.8).abs() < 1e-15);
        assert_eq!(s.get(id).grad.item(), 0.0);
    }

    #[test]
    fn sgd_zero_lr_is_noop_and_bad_lr_errors() {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(1.0), true);
        s.get_mut(id).grad = Tensor::scalar(2.0);
        sgd_step(&mut s, 0.0).unwrap();
        assert_eq!(s.value(id).item(), 1.0);
        assert!(sgd_step(&mut s, -0.1).is_err());
        assert!(sgd_step(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn frozen_params_untouched_and_clip() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::filled(&[2], 1.0), true);
        let b = s.add("b", Tensor::scalar(5.0), false);
        s.get_mut(a).grad = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        s.get_mut(b).grad = Tensor::scalar(100.0);
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
        sgd_step(&mut s, 1.0).unwrap();
        assert_eq!(s.value(b).item(), 5.0);
        assert!((s.value(a).data()[0] - 0.4).abs() < 1e-12);
    }
}
