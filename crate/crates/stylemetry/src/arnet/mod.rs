//! The segment-representation network and its joint objective.
//!
//! Architecture: two stacked GRU layers read the 35-row feature matrix as a
//! sequence of columns; the first returns its full output sequence, the
//! second only its final hidden state. Dropout on that state produces the
//! shared feature x_tilde consumed by two heads:
//!
//! * autoencoder: fc1 (ReLU) compresses x_tilde to the nonnegative code s,
//!   fc2 (tanh) reconstructs x_tilde from s; squared error plus an L1
//!   penalty on s forms the reconstruction loss J_r,
//! * classifier: fc3 logits with softmax cross-entropy form J_c.
//!
//! The joint objective is J = J_r + J_c. Training modes gate the heads:
//! `arnet` keeps both, `ronet` drops the classifier, `conet` drops the
//! autoencoder. The reconstruction gradient deliberately flows through
//! x_tilde into the GRUs (both through the encoder path and through the
//! reconstruction target), so the autoencoder shapes the shared feature
//! instead of merely reading it.

pub mod checkpoint;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featurize::{FeatureMatrix, N_ROWS};
use crate::nn::{
    mse_l1_batch, sample_mask, softmax, softmax_xent_batch, Activation, Dense, DenseGrads, Gru,
    GruGrads, Param, Phase,
};

pub use checkpoint::{load_model, save_model};
pub use train::{train, EpochRecord, TrainHistory};

/// Which heads participate in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Joint: reconstruction + classification.
    Arnet,
    /// Reconstruction only.
    Ronet,
    /// Classification only.
    Conet,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Arnet => "arnet",
            Mode::Ronet => "ronet",
            Mode::Conet => "conet",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "arnet" => Ok(Mode::Arnet),
            "ronet" => Ok(Mode::Ronet),
            "conet" => Ok(Mode::Conet),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// All structural and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnetConfig {
    pub gru1_units: usize,
    pub gru2_units: usize,
    /// Bottleneck width k of the code s.
    pub bottleneck_units: usize,
    pub n_classes: usize,
    pub dropout_p: f64,
    /// L1 weight on the code.
    pub lambda: f64,
    pub mode: Mode,
    pub batch_size: usize,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Early stopping: epochs without validation improvement.
    pub patience: usize,
    /// Diagnostic switch: severs the autoencoder head from the objective so
    /// joint mode reproduces classification-only mode exactly.
    pub detach_autoencoder: bool,
}

impl ArnetConfig {
    /// Full-scale defaults: 256 GRU units, 50 code units, batch 2560.
    pub fn full(n_classes: usize) -> Self {
        ArnetConfig {
            gru1_units: 256,
            gru2_units: 256,
            bottleneck_units: 50,
            n_classes,
            dropout_p: 0.5,
            lambda: 1e-5,
            mode: Mode::Arnet,
            batch_size: 2560,
            lr: 1.0,
            rho: 0.95,
            eps: 1e-8,
            max_epochs: 200,
            seed: 0,
            patience: 10,
            detach_autoencoder: false,
        }
    }

    /// Desk-scale preset that trains in minutes on a laptop CPU.
    pub fn desk(n_classes: usize) -> Self {
        ArnetConfig {
            gru1_units: 32,
            gru2_units: 32,
            bottleneck_units: 16,
            batch_size: 256,
            ..ArnetConfig::full(n_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gru1_units == 0
            || self.gru2_units == 0
            || self.bottleneck_units == 0
            || self.n_classes == 0
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.patience == 0
        {
            return Err(Error::Config("all extents and counters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} must be in [0, 1)", self.dropout_p)));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!("lambda {} must be nonnegative", self.lambda)));
        }
        Ok(())
    }

    /// Whether the reconstruction head participates in the objective.
    pub fn reconstruction_active(&self) -> bool {
        match self.mode {
            Mode::Arnet => !self.detach_autoencoder,
            Mode::Ronet => true,
            Mode::Conet => false,
        }
    }

    /// Whether the classifier head participates in the objective.
    pub fn classification_active(&self) -> bool {
        matches!(self.mode, Mode::Arnet | Mode::Conet)
    }
}

/// Frozen per-row input standardization, fit on the training set once and
/// stored with the model. Raw feature rows live on wildly different scales
/// (speeds in tens of m/s, angular rates in fractions of a radian); without
/// this the GRU gates saturate at initialization and gradients vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaler {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl InputScaler {
    /// No-op scaler (zero shift, unit scale) used before fitting.
    pub fn identity() -> Self {
        InputScaler { mu: vec![0.0; N_ROWS], sigma: vec![1.0; N_ROWS] }
    }

    /// Per-row mean and population standard deviation over every frame of
    /// every sample. Rows with (near-)zero variance keep unit scale so their
    /// standardized value is exactly 0.
    pub fn fit(set: &[(&FeatureMatrix, usize)]) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Validation("cannot fit a scaler on an empty set".into()));
        }
        let n: usize = set.iter().map(|(x, _)| x.cols).sum();
        let mut mu = vec![0.0; N_ROWS];
        for (x, _) in set {
            for (r, m) in mu.iter_mut().enumerate() {
                for c in 0..x.cols {
                    *m += x.get(r, c);
                }
            }
        }
        for m in &mut mu {
            *m /= n as f64;
        }
        let mut sigma = vec![0.0; N_ROWS];
        for (x, _) in set {
            for r in 0..N_ROWS {
                for c in 0..x.cols {
                    let d = x.get(r, c) - mu[r];
                    sigma[r] += d * d;
                }
            }
        }
        for s in &mut sigma {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-8 {
                *s = 1.0;
            }
        }
        Ok(InputScaler { mu, sigma })
    }
}

/// The complete model: parameters plus the input scaler and the driver-id
/// labels the classifier indices refer to.
#[derive(Debug, Clone)]
pub struct ArnetModel {
    pub config: ArnetConfig,
    /// Class index -> driver id, sorted; filled in by training or a loaded
    /// checkpoint.
    pub label_map: Vec<String>,
    pub scaler: InputScaler,
    pub gru1: Gru,
    pub gru2: Gru,
    pub fc1: Dense,
    pub fc2: Dense,
    pub fc3: Dense,
}

/// Per-segment forward outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// Shared hidden feature (dropout output; the clean GRU state at
    /// inference).
    pub x_tilde: Vec<f64>,
    /// Nonnegative bottleneck code.
    pub s: Vec<f64>,
    /// Reconstruction of x_tilde, entries in (-1, 1).
    pub x_hat: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Loss values of one batch. Inactive heads report 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub j: f64,
    pub j_r: f64,
    pub j_c: f64,
}

impl ArnetModel {
    /// Xavier-initialized model; the draw order (gru1, gru2, fc1, fc2, fc3)
    /// is part of the determinism contract.
    pub fn new(config: ArnetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gru1 = Gru::new("gru1", config.gru1_units, N_ROWS, &mut rng);
        let gru2 = Gru::new("gru2", config.gru2_units, config.gru1_units, &mut rng);
        let fc1 = Dense::new("fc1", config.bottleneck_units, config.gru2_units, Activation::Relu, &mut rng);
        let fc2 = Dense::new("fc2", config.gru2_units, config.bottleneck_units, Activation::Tanh, &mut rng);
        let fc3 = Dense::new("fc3", config.n_classes, config.gru2_units, Activation::Identity, &mut rng);
        Ok(ArnetModel {
            config,
            label_map: Vec::new(),
            scaler: InputScaler::identity(),
            gru1,
            gru2,
            fc1,
            fc2,
            fc3,
        })
    }

    /// All-zero parameters; the checkpoint loader fills them in.
    pub(crate) fn zeros(config: ArnetConfig) -> Result<Self> {
        config.validate()?;
        let gru1 = Gru::zeros("gru1", config.gru1_units, N_ROWS);
        let gru2 = Gru::zeros("gru2", config.gru2_units, config.gru1_units);
        let fc1 = Dense::zeros("fc1", config.bottleneck_units, config.gru2_units, Activation::Relu);
        let fc2 = Dense::zeros("fc2", config.gru2_units, config.bottleneck_units, Activation::Tanh);
        let fc3 = Dense::zeros("fc3", config.n_classes, config.gru2_units, Activation::Identity);
        Ok(ArnetModel {
            config,
            label_map: Vec::new(),
            scaler: InputScaler::identity(),
            gru1,
            gru2,
            fc1,
            fc2,
            fc3,
        })
    }

    /// All parameters in the canonical order used by the optimizer and the
    /// checkpoint format.
    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = Vec::with_capacity(24);
        out.extend(self.gru1.params());
        out.extend(self.gru2.params());
        out.extend(self.fc1.params());
        out.extend(self.fc2.params());
        out.extend(self.fc3.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::with_capacity(24);
        out.extend(self.gru1.params_mut());
        out.extend(self.gru2.params_mut());
        out.extend(self.fc1.params_mut());
        out.extend(self.fc2.params_mut());
        out.extend(self.fc3.params_mut());
        out
    }

    /// Standardized timestep columns of a feature matrix.
    pub fn scaled_columns(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        let mut cols = x.columns();
        for col in &mut cols {
            for (r, v) in col.iter_mut().enumerate() {
                *v = (*v - self.scaler.mu[r]) / self.scaler.sigma[r];
            }
        }
        cols
    }

    /// Forward pass over one feature matrix. In the train phase a dropout
    /// mask is drawn from `rng`; at inference dropout is the identity.
    pub fn forward<R: Rng>(
        &self,
        x: &FeatureMatrix,
        phase: Phase,
        rng: &mut R,
    ) -> Result<ForwardResult> {
        let mask = match phase {
            Phase::Train if self.config.dropout_p > 0.0 => {
                Some(sample_mask(self.config.gru2_units, self.config.dropout_p, rng))
            }
            _ => None,
        };
        let trace = self.forward_trace(&self.scaled_columns(x), mask.as_deref())?;
        Ok(trace.into_result())
    }

    /// Code s of a segment (inference mode).
    pub fn encode_segment(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let trace = self.forward_trace(&self.scaled_columns(x), None)?;
        Ok(trace.s)
    }

    /// Softmax class distribution of a segment (inference mode).
    pub fn predict_segment(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if self.config.mode == Mode::Ronet {
            return Err(Error::NoClassifierHead);
        }
        let trace = self.forward_trace(&self.scaled_columns(x), None)?;
        Ok(softmax(&trace.logits))
    }

    /// Full forward pass keeping every activation needed for backward.
    pub(crate) fn forward_trace(
        &self,
        xs: &[Vec<f64>],
        mask: Option<&[f64]>,
    ) -> Result<SegmentTrace> {
        let trace1 = self.gru1.forward_sequence(xs)?;
        let trace2 = self.gru2.forward_sequence(&trace1.hs)?;
        let h2 = trace2.final_hidden().to_vec();
        let x_tilde: Vec<f64> = match mask {
            Some(m) => h2.iter().zip(m.iter()).map(|(h, m)| h * m).collect(),
            None => h2,
        };
        let s = self.fc1.forward(&x_tilde)?;
        let x_hat = self.fc2.forward(&s)?;
        let logits = self.fc3.forward(&x_tilde)?;
        Ok(SegmentTrace {
            gru1: trace1,
            gru2: trace2,
            mask: mask.map(<[f64]>::to_vec),
            x_tilde,
            s,
            x_hat,
            logits,
        })
    }
}

/// Activations of one segment's forward pass.
pub(crate) struct SegmentTrace {
    pub gru1: crate::nn::GruTrace,
    pub gru2: crate::nn::GruTrace,
    pub mask: Option<Vec<f64>>,
    pub x_tilde: Vec<f64>,
    pub s: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub logits: Vec<f64>,
}

impl SegmentTrace {
    fn into_result(self) -> ForwardResult {
        ForwardResult { x_tilde: self.x_tilde, s: self.s, x_hat: self.x_hat, logits: self.logits }
    }
}

/// Gradient buffers for every layer, reducible across parallel sample
/// chunks in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrads {
    pub gru1: GruGrads,
    pub gru2: GruGrads,
    pub fc1: DenseGrads,
    pub fc2: DenseGrads,
    pub fc3: DenseGrads,
}

impl BatchGrads {
    pub fn zeros_like(model: &ArnetModel) -> Self {
        BatchGrads {
            gru1: GruGrads::zeros_like(&model.gru1),
            gru2: GruGrads::zeros_like(&model.gru2),
            fc1: DenseGrads::zeros_like(&model.fc1),
            fc2: DenseGrads::zeros_like(&model.fc2),
            fc3: DenseGrads::zeros_like(&model.fc3),
        }
    }

    pub fn add(&mut self, other: &BatchGrads) {
        self.gru1.add(&other.gru1);
        self.gru2.add(&other.gru2);
        self.fc1.add(&other.fc1);
        self.fc2.add(&other.fc2);
        self.fc3.add(&other.fc3);
    }

    /// Folds the buffers into the model's parameter gradients.
    pub fn accumulate_into(&self, model: &mut ArnetModel) {
        self.gru1.accumulate_into(&mut model.gru1);
        self.gru2.accumulate_into(&mut model.gru2);
        self.fc1.accumulate_into(&mut model.fc1);
        self.fc2.accumulate_into(&mut model.fc2);
        self.fc3.accumulate_into(&mut model.fc3);
    }
}

/// Loss of a batch of forward results under the model's mode gating,
/// without gradients. Inactive heads report 0; `labels` may only be absent
/// in reconstruction-only mode.
pub fn loss_components(
    model: &ArnetModel,
    results: &[ForwardResult],
    labels: Option<&[usize]>,
) -> Result<LossBreakdown> {
    let cfg = &model.config;
    let mut j_r = 0.0;
    let mut j_c = 0.0;
    if cfg.reconstruction_active() {
        let x_hats: Vec<Vec<f64>> = results.iter().map(|r| r.x_hat.clone()).collect();
        let x_tildes: Vec<Vec<f64>> = results.iter().map(|r| r.x_tilde.clone()).collect();
        let codes: Vec<Vec<f64>> = results.iter().map(|r| r.s.clone()).collect();
        j_r = mse_l1_batch(&x_hats, &x_tildes, &codes, cfg.lambda)?.0;
    }
    if cfg.classification_active() {
        let labels = labels.ok_or_else(|| {
            Error::Validation("labels are required unless the mode is reconstruction-only".into())
        })?;
        let logits: Vec<Vec<f64>> = results.iter().map(|r| r.logits.clone()).collect();
        j_c = softmax_xent_batch(&logits, labels)?.0;
    }
    Ok(LossBreakdown { j: j_r + j_c, j_r, j_c })
}

/// Fixed sample-chunk width for parallel gradient accumulation. Chunk
/// boundaries and the reduction order depend only on this constant, never on
/// the worker thread count, so results are bit-identical for any `--threads`
/// value.
const GRAD_CHUNK: usize = 16;

/// Computes the joint loss and all parameter gradients of one batch.
///
/// `masks[i]`, when given, is the pre-drawn dropout mask of sample `i`;
/// `None` runs the batch at inference (identity dropout), which is what the
/// gradient checker uses. Gradients are averaged per sample via the loss
/// normalization, and accumulate into a fresh [`BatchGrads`].
pub fn batch_gradients(
    model: &ArnetModel,
    batch: &[(&FeatureMatrix, usize)],
    masks: Option<&[Vec<f64>]>,
) -> Result<(LossBreakdown, BatchGrads)> {
    let cfg = &model.config;
    if batch.is_empty() {
        return Err(Error::Validation("batch must be nonempty".into()));
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::Shape {
                expected: format!("{} mask(s)", batch.len()),
                actual: format!("{}", m.len()),
            });
        }
    }
    if cfg.classification_active() {
        for &(_, label) in batch {
            if label >= cfg.n_classes {
                return Err(Error::Validation(format!(
                    "label {label} out of range for {} classes",
                    cfg.n_classes
                )));
            }
        }
    }

    let b = batch.len() as f64;
    let chunk_outputs: Vec<Result<(f64, f64, BatchGrads)>> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut grads = BatchGrads::zeros_like(model);
            let mut j_r_sum = 0.0;
            let mut j_c_sum = 0.0;
            for (k, (x, label)) in chunk.iter().enumerate() {
                let mask = masks.map(|m| m[ci * GRAD_CHUNK + k].as_slice());
                let (j_r, j_c) = sample_backward(model, x, *label, mask, b, &mut grads)?;
                j_r_sum += j_r;
                j_c_sum += j_c;
            }
            Ok((j_r_sum, j_c_sum, grads))
        })
        .collect();

    let mut grads = BatchGrads::zeros_like(model);
    let mut j_r = 0.0;
    let mut j_c = 0.0;
    for out in chunk_outputs {
        let (chunk_j_r, chunk_j_c, chunk_grads) = out?;
        j_r += chunk_j_r;
        j_c += chunk_j_c;
        grads.add(&chunk_grads);
    }
    j_r /= b;
    j_c /= b;
    Ok((LossBreakdown { j: j_r + j_c, j_r, j_c }, grads))
}

/// Forward and backward pass of one sample. Returns its unnormalized
/// (J_r, J_c) contributions; gradients, normalized by the full batch size
/// `b`, accumulate into `grads`.
fn sample_backward(
    model: &ArnetModel,
    x: &FeatureMatrix,
    label: usize,
    mask: Option<&[f64]>,
    b: f64,
    grads: &mut BatchGrads,
) -> Result<(f64, f64)> {
    let cfg = &model.config;
    let xs = model.scaled_columns(x);
    let trace = model.forward_trace(&xs, mask)?;

    let mut j_r = 0.0;
    let mut j_c = 0.0;
    // Gradient on x_tilde, filled by both heads.
    let mut dx_tilde = vec![0.0; trace.x_tilde.len()];

    if cfg.classification_active() {
        let max = trace.logits.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let log_sum: f64 = trace.logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        j_c = -(trace.logits[label] - max - log_sum);
        let mut dlogits = softmax(&trace.logits);
        dlogits[label] -= 1.0;
        for v in &mut dlogits {
            *v /= b;
        }
        let dx = model.fc3.backward(&trace.x_tilde, &trace.logits, &dlogits, &mut grads.fc3);
        crate::nn::linalg::add_assign(&mut dx_tilde, &dx);
    }

    if cfg.reconstruction_active() {
        let mut d_recon = Vec::with_capacity(trace.x_hat.len());
        for (r, t) in trace.x_hat.iter().zip(trace.x_tilde.iter()) {
            let e = r - t;
            j_r += e * e;
            d_recon.push(2.0 * e / b);
        }
        // Decoder path: d(s) from the reconstruction, plus the L1 term
        // (subgradient at 0 taken as 0).
        let mut ds = model.fc2.backward(&trace.s, &trace.x_hat, &d_recon, &mut grads.fc2);
        for (ds_i, &s_i) in ds.iter_mut().zip(trace.s.iter()) {
            j_r += cfg.lambda * s_i.abs();
            if s_i > 0.0 {
                *ds_i += cfg.lambda / b;
            } else if s_i < 0.0 {
                *ds_i -= cfg.lambda / b;
            }
        }
        // Encoder path into x_tilde.
        let dx = model.fc1.backward(&trace.x_tilde, &trace.s, &ds, &mut grads.fc1);
        crate::nn::linalg::add_assign(&mut dx_tilde, &dx);
        // Target path: x_tilde is also the reconstruction target, so it
        // receives the negated reconstruction gradient.
        for (dx_t, d_r) in dx_tilde.iter_mut().zip(d_recon.iter()) {
            *dx_t -= d_r;
        }
    }

    // Through dropout and both GRUs.
    let dh2: Vec<f64> = match &trace.mask {
        Some(m) => dx_tilde.iter().zip(m.iter()).map(|(d, m)| d * m).collect(),
        None => dx_tilde,
    };
    let t2 = trace.gru2.hs.len();
    let mut dhs2 = vec![vec![0.0; model.config.gru2_units]; t2];
    dhs2[t2 - 1] = dh2;
    let dh1s = model.gru2.backward(&trace.gru1.hs, &trace.gru2, &dhs2, &mut grads.gru2);
    model.gru1.backward(&xs, &trace.gru1, &dh1s, &mut grads.gru1);
    Ok((j_r, j_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::SegmentMeta;
    use crate::nn::gradient_check;

    pub(crate) fn matrix_from_fn(cols: usize, f: impl Fn(usize, usize) -> f64) -> FeatureMatrix {
        let mut data = vec![0.0; N_ROWS * cols];
        for r in 0..N_ROWS {
            for c in 0..cols {
                data[r * cols + c] = f(r, c);
            }
        }
        FeatureMatrix {
            meta: SegmentMeta { driver_id: "d".into(), trip_id: "t".into(), segment_index: 0 },
            cols,
            data,
        }
    }

    fn tiny_config(mode: Mode) -> ArnetConfig {
        ArnetConfig {
            gru1_units: 4,
            gru2_units: 4,
            bottleneck_units: 3,
            n_classes: 2,
            dropout_p: 0.0,
            lambda: 1e-3,
            mode,
            batch_size: 4,
            max_epochs: 1,
            seed: 123,
            ..ArnetConfig::full(2)
        }
    }

    #[test]
    fn zero_input_zero_params_propagates_zero() {
        let mut model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        for p in model.params_mut() {
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = matrix_from_fn(6, |_, _| 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = model.forward(&x, Phase::Infer, &mut rng).unwrap();
        assert!(r.x_tilde.iter().all(|&v| v == 0.0));
        assert!(r.s.iter().all(|&v| v == 0.0));
        assert!(r.x_hat.iter().all(|&v| v == 0.0));
        assert!(r.logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inference_is_deterministic() {
        let model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        let x = matrix_from_fn(6, |r, c| ((r * 7 + c) % 5) as f64 * 0.1 - 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = model.forward(&x, Phase::Infer, &mut rng).unwrap();
        let b = model.forward(&x, Phase::Infer, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn code_is_nonnegative() {
        let model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        for variant in 0..5 {
            let x = matrix_from_fn(6, |r, c| ((r + c + variant) % 7) as f64 * 0.3 - 0.9);
            let s = model.encode_segment(&x).unwrap();
            assert!(s.iter().all(|&v| v >= 0.0), "s = {s:?}");
        }
    }

    #[test]
    fn reconstruction_stays_inside_tanh_range() {
        let model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        let x = matrix_from_fn(6, |r, c| (r as f64 - c as f64) * 0.25);
        let r = model.forward(&x, Phase::Infer, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(r.x_hat.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn predict_rejects_reconstruction_only_models() {
        let model = ArnetModel::new(tiny_config(Mode::Ronet)).unwrap();
        let x = matrix_from_fn(6, |_, _| 0.1);
        assert!(matches!(model.predict_segment(&x), Err(Error::NoClassifierHead)));
    }

    #[test]
    fn zero_model_predicts_uniformly() {
        let mut model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        for p in model.params_mut() {
            p.value.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = matrix_from_fn(6, |r, c| (r + c) as f64 * 0.01);
        let p = model.predict_segment(&x).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mode_gating_reports_inactive_heads_as_zero() {
        let x = matrix_from_fn(6, |r, c| ((r * 3 + c) % 4) as f64 * 0.2 - 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let conet = ArnetModel::new(tiny_config(Mode::Conet)).unwrap();
        let r = conet.forward(&x, Phase::Infer, &mut rng).unwrap();
        let b = loss_components(&conet, &[r], Some(&[1])).unwrap();
        assert_eq!(b.j_r, 0.0);
        assert_eq!(b.j, b.j_c);

        let ronet = ArnetModel::new(tiny_config(Mode::Ronet)).unwrap();
        let r = ronet.forward(&x, Phase::Infer, &mut rng).unwrap();
        let b = loss_components(&ronet, &[r], None).unwrap();
        assert_eq!(b.j_c, 0.0);
        assert_eq!(b.j, b.j_r);
    }

    #[test]
    fn missing_labels_outside_reconstruction_mode_is_an_error() {
        let model = ArnetModel::new(tiny_config(Mode::Arnet)).unwrap();
        let x = matrix_from_fn(6, |_, _| 0.2);
        let r = model.forward(&x, Phase::Infer, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert!(loss_components(&model, &[r], None).is_err());
    }

    #[test]
    fn detached_joint_loss_equals_classifier_only_loss() {
        let x0 = matrix_from_fn(6, |r, c| ((r + 2 * c) % 5) as f64 * 0.1);
        let x1 = matrix_from_fn(6, |r, c| ((2 * r + c) % 3) as f64 * 0.2 - 0.1);
        let batch = [(&x0, 0usize), (&x1, 1usize)];

        let mut arnet_cfg = tiny_config(Mode::Arnet);
        arnet_cfg.lambda = 0.0;
        arnet_cfg.detach_autoencoder = true;
        let arnet = ArnetModel::new(arnet_cfg).unwrap();
        let conet = ArnetModel::new(tiny_config(Mode::Conet)).unwrap();

        let (a, ga) = batch_gradients(&arnet, &batch, None).unwrap();
        let (c, gc) = batch_gradients(&conet, &batch, None).unwrap();
        assert_eq!(a.j.to_bits(), c.j.to_bits());
        assert_eq!(ga, gc);
    }

    struct CheckRig {
        model: ArnetModel,
        xs: Vec<FeatureMatrix>,
        labels: Vec<usize>,
    }

    impl CheckRig {
        fn batch(&self) -> Vec<(&FeatureMatrix, usize)> {
            self.xs.iter().zip(self.labels.iter().copied()).collect()
        }
    }

    fn check_mode(mode: Mode) -> f64 {
        let mut rig = CheckRig {
            model: ArnetModel::new(tiny_config(mode)).unwrap(),
            xs: (0..3)
                .map(|k| matrix_from_fn(6, |r, c| (((r + c + k) % 9) as f64 - 4.0) * 0.15))
                .collect(),
            labels: vec![0, 1, 0],
        };
        let report = gradient_check(
            &mut rig,
            |rig| {
                for p in rig.model.params_mut() {
                    p.grad.data.iter_mut().for_each(|g| *g = 0.0);
                }
                let (loss, grads) = batch_gradients(&rig.model, &rig.batch(), None).unwrap();
                grads.accumulate_into(&mut rig.model);
                loss.j
            },
            |rig| {
                let batch = rig.batch();
                let mut results = Vec::new();
                for (x, _) in &batch {
                    let trace =
                        rig.model.forward_trace(&rig.model.scaled_columns(x), None).unwrap();
                    results.push(ForwardResult {
                        x_tilde: trace.x_tilde.clone(),
                        s: trace.s.clone(),
                        x_hat: trace.x_hat.clone(),
                        logits: trace.logits.clone(),
                    });
                }
                loss_components(&rig.model, &results, Some(&rig.labels)).unwrap().j
            },
            |rig| rig.model.params_mut(),
            4,
            1e-5,
            2024,
        );
        report.max_rel_err
    }

    #[test]
    fn joint_gradients_match_finite_differences() {
        assert!(check_mode(Mode::Arnet) < 1e-4);
    }

    #[test]
    fn reconstruction_gradients_match_finite_differences() {
        assert!(check_mode(Mode::Ronet) < 1e-4);
    }

    #[test]
    fn classification_gradients_match_finite_differences() {
        assert!(check_mode(Mode::Conet) < 1e-4);
    }
}
