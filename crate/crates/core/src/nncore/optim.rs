use std::sync::Arc;

use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// A learnable tensor together with its gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter<F> {
    pub name: String,
    value: Arc<Tensor<F>>,
    pub grad: Tensor<F>,
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
}

impl<F: Scalar> Parameter<F> {
    pub fn value(&self) -> &Tensor<F> {
        &self.value
    }

    pub(crate) fn shared(&self) -> Arc<Tensor<F>> {
        Arc::clone(&self.value)
    }

    /// Mutable access to the value. Clones the buffer if a graph still holds it.
    pub fn value_mut(&mut self) -> &mut Tensor<F> {
        Arc::make_mut(&mut self.value)
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Ordered collection of parameters. Iteration order is insertion order and
/// is the order in which optimizer updates are applied.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    params: Vec<Parameter<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let n = value.len();
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value: Arc::new(value),
            grad,
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            step: 0,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        self.params[id.0].value()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = F::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[F]) {
        let dst = self.params[id.0].grad.data_mut();
        for (d, &s) in dst.iter_mut().zip(g) {
            *d = *d + s;
        }
    }

    /// One bias-corrected Adam update of every parameter, in insertion order.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        let b1 = F::of(cfg.beta1);
        let b2 = F::of(cfg.beta2);
        let one = F::one();
        for p in &mut self.params {
            p.step += 1;
            let t = p.step as i32;
            let c1 = F::of(1.0 - cfg.beta1.powi(t));
            let c2 = F::of(1.0 - cfg.beta2.powi(t));
            let lr = F::of(cfg.lr);
            let eps = F::of(cfg.eps);
            let value = Arc::make_mut(&mut p.value).data_mut();
            let grad = p.grad.data();
            for i in 0..value.len() {
                let g = grad[i];
                let m = b1 * p.m[i] + (one - b1) * g;
                let v = b2 * p.v[i] + (one - b2) * g * g;
                p.m[i] = m;
                p.v[i] = v;
                let mhat = m / c1;
                let vhat = v / c2;
                value[i] = value[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
