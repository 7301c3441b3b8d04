//! Gated recurrent unit layer with exact backpropagation through time.
//!
//! Cell convention, fixed so checkpoints are portable:
//!
//! ```text
//! z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! g_t = tanh(W_h x_t + U_h (r_t . h_{t-1}) + b_h)
//! h_t = (1 - z_t) . h_{t-1} + z_t . g_t
//! ```
//!
//! The backward pass runs over all timesteps with no truncation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::init::xavier_uniform;
use crate::nn::linalg::{add_assign, matvec_add, matvec_t_add, outer_add, sigmoid};
use crate::nn::param::{Param, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_z: Param,
    pub u_z: Param,
    pub b_z: Param,
    pub w_r: Param,
    pub u_r: Param,
    pub b_r: Param,
    pub w_h: Param,
    pub u_h: Param,
    pub b_h: Param,
}

/// One cell step's activations: `(z, r, r*h_prev, h_bar, h)`.
type CellStep = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Per-timestep activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct GruTrace {
    pub zs: Vec<Vec<f64>>,
    pub rs: Vec<Vec<f64>>,
    /// r_t . h_{t-1}, the gated recurrent input of the candidate.
    pub rhs: Vec<Vec<f64>>,
    /// Candidate states g_t.
    pub gs: Vec<Vec<f64>>,
    /// Hidden states h_t, one per timestep.
    pub hs: Vec<Vec<f64>>,
}

impl GruTrace {
    pub fn final_hidden(&self) -> &[f64] {
        self.hs.last().expect("trace holds at least one step")
    }
}

impl Gru {
    /// Xavier-uniform weights, zero biases. Parameter names get the given
    /// prefix, e.g. `gru1.w_z`.
    pub fn new<R: Rng>(prefix: &str, hidden_dim: usize, input_dim: usize, rng: &mut R) -> Self {
        let w = |name: &str, out: usize, inp: usize, rng: &mut R| {
            Param::new(
                format!("{prefix}.{name}"),
                Tensor::from_data(&[out, inp], xavier_uniform(out, inp, rng)),
            )
        };
        let b = |name: &str, out: usize| {
            Param::new(format!("{prefix}.{name}"), Tensor::zeros(&[out]))
        };
        Gru {
            w_z: w("w_z", hidden_dim, input_dim, rng),
            u_z: w("u_z", hidden_dim, hidden_dim, rng),
            b_z: b("b_z", hidden_dim),
            w_r: w("w_r", hidden_dim, input_dim, rng),
            u_r: w("u_r", hidden_dim, hidden_dim, rng),
            b_r: b("b_r", hidden_dim),
            w_h: w("w_h", hidden_dim, input_dim, rng),
            u_h: w("u_h", hidden_dim, hidden_dim, rng),
            b_h: b("b_h", hidden_dim),
        }
    }

    pub fn zeros(prefix: &str, hidden_dim: usize, input_dim: usize) -> Self {
        let w = |name: &str, out: usize, inp: usize| {
            Param::new(format!("{prefix}.{name}"), Tensor::zeros(&[out, inp]))
        };
        let b = |name: &str, out: usize| {
            Param::new(format!("{prefix}.{name}"), Tensor::zeros(&[out]))
        };
        Gru {
            w_z: w("w_z", hidden_dim, input_dim),
            u_z: w("u_z", hidden_dim, hidden_dim),
            b_z: b("b_z", hidden_dim),
            w_r: w("w_r", hidden_dim, input_dim),
            u_r: w("u_r", hidden_dim, hidden_dim),
            b_r: b("b_r", hidden_dim),
            w_h: w("w_h", hidden_dim, input_dim),
            u_h: w("u_h", hidden_dim, hidden_dim),
            b_h: b("b_h", hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.value.cols()
    }

    /// One cell step; used directly in tests, and by `forward_sequence` for
    /// every timestep.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        let (_, _, _, _, h) = self.cell(x, h_prev)?;
        Ok(h)
    }

    fn cell(&self, x: &[f64], h_prev: &[f64]) -> Result<CellStep> {
        let n = self.hidden_dim();
        if x.len() != self.input_dim() || h_prev.len() != n {
            return Err(Error::Shape {
                expected: format!("input {} and hidden {}", self.input_dim(), n),
                actual: format!("input {} and hidden {}", x.len(), h_prev.len()),
            });
        }

        let mut z = self.b_z.value.data.clone();
        matvec_add(&self.w_z.value.data, n, self.input_dim(), x, &mut z);
        matvec_add(&self.u_z.value.data, n, n, h_prev, &mut z);
        for v in &mut z {
            *v = sigmoid(*v);
        }

        let mut r = self.b_r.value.data.clone();
        matvec_add(&self.w_r.value.data, n, self.input_dim(), x, &mut r);
        matvec_add(&self.u_r.value.data, n, n, h_prev, &mut r);
        for v in &mut r {
            *v = sigmoid(*v);
        }

        let rh: Vec<f64> = r.iter().zip(h_prev.iter()).map(|(r_i, h_i)| r_i * h_i).collect();

        let mut g = self.b_h.value.data.clone();
        matvec_add(&self.w_h.value.data, n, self.input_dim(), x, &mut g);
        matvec_add(&self.u_h.value.data, n, n, &rh, &mut g);
        for v in &mut g {
            *v = v.tanh();
        }

        let h: Vec<f64> = (0..n).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * g[i]).collect();
        Ok((z, r, rh, g, h))
    }

    /// Runs the cell over the whole sequence from h_0 = 0 and returns the
    /// full activation trace.
    pub fn forward_sequence(&self, xs: &[Vec<f64>]) -> Result<GruTrace> {
        if xs.is_empty() {
            return Err(Error::Validation("GRU sequence must have at least one step".into()));
        }
        let t_len = xs.len();
        let mut trace = GruTrace {
            zs: Vec::with_capacity(t_len),
            rs: Vec::with_capacity(t_len),
            rhs: Vec::with_capacity(t_len),
            gs: Vec::with_capacity(t_len),
            hs: Vec::with_capacity(t_len),
        };
        let mut h = vec![0.0; self.hidden_dim()];
        for x in xs {
            let (z, r, rh, g, h_next) = self.cell(x, &h)?;
            h = h_next.clone();
            trace.zs.push(z);
            trace.rs.push(r);
            trace.rhs.push(rh);
            trace.gs.push(g);
            trace.hs.push(h_next);
        }
        Ok(trace)
    }

    /// Full backpropagation through time.
    ///
    /// `dhs[t]` is the loss gradient on h_t from outside the layer (zero
    /// vectors where the output is unused). Parameter gradients accumulate
    /// into `grads`; the return value is the gradient on each input step.
    pub fn backward(
        &self,
        xs: &[Vec<f64>],
        trace: &GruTrace,
        dhs: &[Vec<f64>],
        grads: &mut GruGrads,
    ) -> Vec<Vec<f64>> {
        let n = self.hidden_dim();
        let t_len = xs.len();
        debug_assert_eq!(dhs.len(), t_len);

        let zero = vec![0.0; n];
        let mut dxs = vec![vec![0.0; self.input_dim()]; t_len];
        // Gradient flowing into h_t from step t+1.
        let mut dh_chain = vec![0.0; n];

        for t in (0..t_len).rev() {
            let h_prev = if t == 0 { &zero } else { &trace.hs[t - 1] };
            let (z, r, rh, g) = (&trace.zs[t], &trace.rs[t], &trace.rhs[t], &trace.gs[t]);

            let mut dh = dh_chain.clone();
            add_assign(&mut dh, &dhs[t]);

            // h = (1 - z) . h_prev + z . g
            let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - z[i])).collect();
            let dz_pre: Vec<f64> =
                (0..n).map(|i| dh[i] * (g[i] - h_prev[i]) * z[i] * (1.0 - z[i])).collect();
            let dg_pre: Vec<f64> = (0..n).map(|i| dh[i] * z[i] * (1.0 - g[i] * g[i])).collect();

            // Candidate branch: g = tanh(W_h x + U_h (r . h_prev) + b_h)
            outer_add(&mut grads.w_h, &dg_pre, &xs[t]);
            outer_add(&mut grads.u_h, &dg_pre, rh);
            add_assign(&mut grads.b_h, &dg_pre);
            matvec_t_add(&self.w_h.value.data, n, self.input_dim(), &dg_pre, &mut dxs[t]);
            let mut drh = vec![0.0; n];
            matvec_t_add(&self.u_h.value.data, n, n, &dg_pre, &mut drh);
            for i in 0..n {
                dh_prev[i] += drh[i] * r[i];
            }
            let dr_pre: Vec<f64> =
                (0..n).map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i])).collect();

            // Reset gate branch.
            outer_add(&mut grads.w_r, &dr_pre, &xs[t]);
            outer_add(&mut grads.u_r, &dr_pre, h_prev);
            add_assign(&mut grads.b_r, &dr_pre);
            matvec_t_add(&self.w_r.value.data, n, self.input_dim(), &dr_pre, &mut dxs[t]);
            matvec_t_add(&self.u_r.value.data, n, n, &dr_pre, &mut dh_prev);

            // Update gate branch.
            outer_add(&mut grads.w_z, &dz_pre, &xs[t]);
            outer_add(&mut grads.u_z, &dz_pre, h_prev);
            add_assign(&mut grads.b_z, &dz_pre);
            matvec_t_add(&self.w_z.value.data, n, self.input_dim(), &dz_pre, &mut dxs[t]);
            matvec_t_add(&self.u_z.value.data, n, n, &dz_pre, &mut dh_prev);

            dh_chain = dh_prev;
        }
        dxs
    }

    /// Canonical parameter order used everywhere (optimizer, checkpoints).
    pub fn params(&self) -> [&Param; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z,
            &self.w_r, &self.u_r, &self.b_r,
            &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 9] {
        [
            &mut self.w_z, &mut self.u_z, &mut self.b_z,
            &mut self.w_r, &mut self.u_r, &mut self.b_r,
            &mut self.w_h, &mut self.u_h, &mut self.b_h,
        ]
    }
}

/// Per-batch gradient buffer mirroring [`Gru`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GruGrads {
    pub w_z: Vec<f64>,
    pub u_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub u_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruGrads {
    pub fn zeros_like(gru: &Gru) -> Self {
        GruGrads {
            w_z: vec![0.0; gru.w_z.value.len()],
            u_z: vec![0.0; gru.u_z.value.len()],
            b_z: vec![0.0; gru.b_z.value.len()],
            w_r: vec![0.0; gru.w_r.value.len()],
            u_r: vec![0.0; gru.u_r.value.len()],
            b_r: vec![0.0; gru.b_r.value.len()],
            w_h: vec![0.0; gru.w_h.value.len()],
            u_h: vec![0.0; gru.u_h.value.len()],
            b_h: vec![0.0; gru.b_h.value.len()],
        }
    }

    pub fn add(&mut self, other: &GruGrads) {
        add_assign(&mut self.w_z, &other.w_z);
        add_assign(&mut self.u_z, &other.u_z);
        add_assign(&mut self.b_z, &other.b_z);
        add_assign(&mut self.w_r, &other.w_r);
        add_assign(&mut self.u_r, &other.u_r);
        add_assign(&mut self.b_r, &other.b_r);
        add_assign(&mut self.w_h, &other.w_h);
        add_assign(&mut self.u_h, &other.u_h);
        add_assign(&mut self.b_h, &other.b_h);
    }

    pub fn accumulate_into(&self, gru: &mut Gru) {
        add_assign(&mut gru.w_z.grad.data, &self.w_z);
        add_assign(&mut gru.u_z.grad.data, &self.u_z);
        add_assign(&mut gru.b_z.grad.data, &self.b_z);
        add_assign(&mut gru.w_r.grad.data, &self.w_r);
        add_assign(&mut gru.u_r.grad.data, &self.u_r);
        add_assign(&mut gru.b_r.grad.data, &self.b_r);
        add_assign(&mut gru.w_h.grad.data, &self.w_h);
        add_assign(&mut gru.u_h.grad.data, &self.u_h);
        add_assign(&mut gru.b_h.grad.data, &self.b_h);
    }
}
