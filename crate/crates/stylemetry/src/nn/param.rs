//! Tensors, trainable parameters, and the ADADELTA update rule.

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must match its shape"
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// First extent; the output dimension of a weight matrix.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Second extent, or 1 for vectors.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }
}

/// ADADELTA hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDelta {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdaDelta {
    fn default() -> Self {
        AdaDelta { lr: 1.0, rho: 0.95, eps: 1e-8 }
    }
}

/// A named trainable tensor with its gradient and ADADELTA accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub acc_grad_sq: Tensor,
    pub acc_update_sq: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape.clone();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            acc_grad_sq: Tensor::zeros(&shape),
            acc_update_sq: Tensor::zeros(&shape),
        }
    }

    /// One ADADELTA step from the accumulated gradient, which is then
    /// zeroed. Per coordinate:
    ///
    /// ```text
    /// acc_g <- rho * acc_g + (1 - rho) * g^2
    /// delta  = -sqrt(acc_u + eps) / sqrt(acc_g + eps) * g
    /// acc_u <- rho * acc_u + (1 - rho) * delta^2
    /// value <- value + lr * delta
    /// ```
    pub fn adadelta_step(&mut self, hp: &AdaDelta) {
        for i in 0..self.value.data.len() {
            let g = self.grad.data[i];
            let acc_g = hp.rho * self.acc_grad_sq.data[i] + (1.0 - hp.rho) * g * g;
            let delta = -((self.acc_update_sq.data[i] + hp.eps).sqrt() / (acc_g + hp.eps).sqrt()) * g;
            self.acc_grad_sq.data[i] = acc_g;
            self.acc_update_sq.data[i] = hp.rho * self.acc_update_sq.data[i] + (1.0 - hp.rho) * delta * delta;
            self.value.data[i] += hp.lr * delta;
            self.grad.data[i] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Param {
        Param::new("p", Tensor::from_data(&[1], vec![v]))
    }

    #[test]
    fn zero_gradient_leaves_value_unchanged() {
        let mut p = scalar_param(3.5);
        p.acc_grad_sq.data[0] = 0.2;
        p.acc_update_sq.data[0] = 0.1;
        p.adadelta_step(&AdaDelta::default());
        assert_eq!(p.value.data[0], 3.5);
        assert!(p.acc_grad_sq.data[0] < 0.2);
        assert!(p.acc_update_sq.data[0] < 0.1);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // g=1, rho=0.95, eps=1e-8, lr=1:
        // delta = -sqrt(1e-8) / sqrt(0.05 + 1e-8)
        let mut p = scalar_param(0.0);
        p.grad.data[0] = 1.0;
        p.adadelta_step(&AdaDelta::default());
        let expected = -(1e-8f64).sqrt() / (0.05f64 + 1e-8).sqrt();
        assert!((p.value.data[0] - expected).abs() < 1e-15);
        assert!((p.value.data[0] - (-4.4721e-4)).abs() < 1e-8);
        assert_eq!(p.grad.data[0], 0.0);
    }

    #[test]
    fn second_identical_step_is_larger() {
        let mut p = scalar_param(0.0);
        p.grad.data[0] = 1.0;
        p.adadelta_step(&AdaDelta::default());
        let first = -p.value.data[0];
        p.grad.data[0] = 1.0;
        p.adadelta_step(&AdaDelta::default());
        let second = -p.value.data[0] - first;
        assert!(second > first, "first = {first}, second = {second}");
    }

    #[test]
    fn zero_learning_rate_freezes_values() {
        let mut p = scalar_param(1.25);
        p.grad.data[0] = -7.0;
        p.adadelta_step(&AdaDelta { lr: 0.0, ..AdaDelta::default() });
        assert_eq!(p.value.data[0], 1.25);
    }
}
