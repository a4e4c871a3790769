use ndarray::Array2;

use super::rng::Rng;
use super::tape::{Gradients, Tape, Var};

/// A persistent trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: (usize, usize)) -> Self {
        Self::new(name, Array2::zeros(shape))
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, where `fan_in` is the
    /// row count of the weight matrix.
    pub fn uniform_fan_in(name: impl Into<String>, shape: (usize, usize), rng: &mut Rng) -> Self {
        let bound = 1.0 / (shape.0 as f64).sqrt();
        let value = Array2::from_shape_fn(shape, |_| rng.uniform_range(-bound, bound));
        Self::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything owning an ordered list of [`Param`]s.
pub trait Module {
    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Record every parameter on `tape` as a gradient-tracked leaf, in
    /// [`Module::params`] order.
    fn bind(&self, tape: &Tape) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| tape.variable(p.value.clone()))
            .collect()
    }

    /// Record every parameter as a constant (no gradient flows back).
    fn bind_frozen(&self, tape: &Tape) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| tape.constant(p.value.clone()))
            .collect()
    }

    /// Add the gradients of the vars returned by [`Module::bind`] into each
    /// parameter's `grad`.
    fn accumulate(&mut self, vars: &[Var], grads: &Gradients) {
        for (p, &v) in self.params_mut().into_iter().zip(vars) {
            if let Some(g) = grads.get(v) {
                p.grad += g;
            }
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().len()
    }
}
