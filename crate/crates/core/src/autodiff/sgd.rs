//! Stochastic gradient descent with classical momentum.

use super::{AdError, Matrix, Value};
use std::collections::HashMap;

/// SGD state: learning rate, momentum coefficient, and one velocity buffer
/// per named parameter. The update is
/// `buffer <- momentum * buffer + grad; p <- p - lr * buffer`,
/// i.e. `p <- p - lr * (momentum * buffer_old + grad)`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    buffers: HashMap<String, Matrix>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self, AdError> {
        if !(lr > 0.0) {
            return Err(AdError::BadHyper(format!("lr must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(AdError::BadHyper(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(Sgd { lr, momentum, buffers: HashMap::new() })
    }

    /// Applies one update to every parameter and zeroes its gradient, so the
    /// next backward pass starts clean. A non-finite gradient aborts before
    /// any parameter is touched (training divergence signal).
    pub fn step(&mut self, params: &[(String, Value)]) -> Result<(), AdError> {
        for (name, p) in params {
            if p.grad().iter().any(|v| !v.is_finite()) {
                return Err(AdError::NonFiniteGrad { name: name.clone() });
            }
        }
        for (name, p) in params {
            let g = p.grad().clone();
            let buf = self
                .buffers
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(g.raw_dim()));
            *buf *= self.momentum;
            *buf += &g;
            let updated = &*p.data() - &(self.lr * &*buf);
            p.set_data(updated);
            p.zero_grad();
        }
        Ok(())
    }

    /// The velocity buffer for a parameter, if a step has touched it.
    pub fn buffer(&self, name: &str) -> Option<&Matrix> {
        self.buffers.get(name)
    }

    pub fn set_buffer(&mut self, name: String, buf: Matrix) {
        self.buffers.insert(name, buf);
    }
}
