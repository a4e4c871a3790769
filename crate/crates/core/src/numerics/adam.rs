use ndarray::{Array2, Zip};

use super::param::Param;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<Array2<f64>>,
    second_moment: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// First and second moment buffers, empty before the first step.
    pub fn moments(&self) -> (&[Array2<f64>], &[Array2<f64>]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn set_moments(&mut self, first: Vec<Array2<f64>>, second: Vec<Array2<f64>>) -> Result<()> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.dim() != b.dim()) {
            return Err(Error::Contract("first and second moments disagree in shape".into()));
        }
        self.first_moment = first;
        self.second_moment = second;
        Ok(())
    }

    /// One update of every parameter from its accumulated `grad`.
    ///
    /// Moment buffers are allocated on the first call; later calls must pass
    /// the same parameters in the same order.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Array2::zeros(p.value.dim())).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first_moment) {
            if p.value.dim() != m.dim() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: m.shape().to_vec(),
                    right: p.value.shape().to_vec(),
                });
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("gradient of parameter `{}`", p.name)));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
