//! Fully connected layer with an elementwise activation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::xavier_uniform;
use crate::nn::linalg::{add_assign, matvec, matvec_t_add, outer_add};
use crate::nn::param::{Param, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output. The ReLU
    /// subgradient at 0 is 0, so exact zeros stay zero.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// y = act(W x + b), with W row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
    pub activation: Activation,
}

impl Dense {
    /// Xavier-uniform weight, zero bias.
    pub fn new<R: Rng>(
        prefix: &str,
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Dense {
            w: Param::new(
                format!("{prefix}.w"),
                Tensor::from_data(&[out_dim, in_dim], xavier_uniform(out_dim, in_dim, rng)),
            ),
            b: Param::new(format!("{prefix}.b"), Tensor::zeros(&[out_dim])),
            activation,
        }
    }

    pub fn zeros(prefix: &str, out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        Dense {
            w: Param::new(format!("{prefix}.w"), Tensor::zeros(&[out_dim, in_dim])),
            b: Param::new(format!("{prefix}.b"), Tensor::zeros(&[out_dim])),
            activation,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape {
                expected: format!("input of {}", self.in_dim()),
                actual: format!("{}", x.len()),
            });
        }
        let mut y = self.b.value.data.clone();
        let mut z = vec![0.0; self.out_dim()];
        matvec(&self.w.value.data, self.out_dim(), self.in_dim(), x, &mut z);
        for (y_o, z_o) in y.iter_mut().zip(z.iter()) {
            *y_o = self.activation.apply(*y_o + z_o);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient. `y` must be the forward output for this `x`.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut DenseGrads) -> Vec<f64> {
        let dz: Vec<f64> = dy
            .iter()
            .zip(y.iter())
            .map(|(dy_o, y_o)| dy_o * self.activation.derivative_from_output(*y_o))
            .collect();
        add_assign(&mut grads.b, &dz);
        outer_add(&mut grads.w, &dz, x);
        let mut dx = vec![0.0; self.in_dim()];
        matvec_t_add(&self.w.value.data, self.out_dim(), self.in_dim(), &dz, &mut dx);
        dx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }
}

/// Per-batch gradient buffer for one dense layer, kept separate from the
/// parameters so sample chunks can be processed in parallel and reduced in a
/// fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrads {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrads { w: vec![0.0; layer.w.value.len()], b: vec![0.0; layer.b.value.len()] }
    }

    pub fn add(&mut self, other: &DenseGrads) {
        add_assign(&mut self.w, &other.w);
        add_assign(&mut self.b, &other.b);
    }

    /// Folds this buffer into the layer's parameter gradients.
    pub fn accumulate_into(&self, layer: &mut Dense) {
        add_assign(&mut layer.w.grad.data, &self.w);
        add_assign(&mut layer.b.grad.data, &self.b);
    }
}
