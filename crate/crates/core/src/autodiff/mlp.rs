//! Multilayer perceptron parameters: per-layer weight matrices and bias
//! rows, with a configurable hidden activation. The output layer is linear.

use super::{AdError, Matrix, Value};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Hidden-layer activation tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, v: &Value) -> Value {
        match self {
            Activation::Relu => v.relu(),
            Activation::LeakyRelu(leak) => v.relu_leaky(*leak),
        }
    }
}

/// One affine layer: `x * w + b` with `w` KxM and `b` 1xM.
#[derive(Clone)]
pub struct Linear {
    pub w: Value,
    pub b: Value,
}

impl Linear {
    pub fn from_rng<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        // He initialization keeps activation scale steady through ReLU stacks.
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid normal");
        let w = Matrix::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng));
        let b = Matrix::zeros((1, fan_out));
        Linear { w: Value::param(w), b: Value::param(b) }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            w: Value::param(Matrix::zeros((fan_in, fan_out))),
            b: Value::param(Matrix::zeros((1, fan_out))),
        }
    }

    pub fn apply(&self, x: &Value) -> Result<Value, AdError> {
        x.matmul(&self.w)?.add_bias(&self.b)
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape().0
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape().1
    }
}

/// A stack of affine layers with `hidden` applied between them (not after
/// the last). Layer dimensions chain by construction.
#[derive(Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
}

impl Mlp {
    /// Random initialization for the given dimension chain, e.g. `[4, 16, 16]`
    /// builds 4->16->16 with one hidden activation.
    pub fn from_rng<R: Rng>(dims: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims.windows(2).map(|w| Linear::from_rng(w[0], w[1], rng)).collect();
        Mlp { layers, hidden }
    }

    pub fn zeros(dims: &[usize], hidden: Activation) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Mlp { layers, hidden }
    }

    pub fn apply(&self, x: &Value) -> Result<Value, AdError> {
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.apply(&cur)?;
            if i < last {
                cur = self.hidden.apply(&cur);
            }
        }
        Ok(cur)
    }

    /// All parameter leaves in a fixed order (w then b per layer).
    pub fn params(&self) -> Vec<Value> {
        self.layers.iter().flat_map(|l| [l.w.clone(), l.b.clone()]).collect()
    }

    /// Overwrites every parameter with zeros, preserving shapes.
    pub fn set_zero(&self) {
        for l in &self.layers {
            let w_dim = l.w.data().raw_dim();
            l.w.set_data(Matrix::zeros(w_dim));
            let b_dim = l.b.data().raw_dim();
            l.b.set_data(Matrix::zeros(b_dim));
        }
    }
}
