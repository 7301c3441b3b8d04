//! The two training losses: softmax cross-entropy and reconstruction error
//! with an L1 code penalty. Both are averaged per sample so their relative
//! weight does not depend on batch size.

use crate::error::{Error, Result};

/// Batch loss with its per-sample gradients: `(loss, d_recons, d_codes)`.
type BatchLossGrads = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Max-subtracted softmax; outputs are nonnegative and sum to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy of a logit batch against integer labels.
///
/// Returns the loss and the logit gradients `(softmax - onehot) / n`.
pub fn softmax_xent_batch(
    logits: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} label(s)", logits.len()),
            actual: format!("{}", labels.len()),
        });
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels.iter()) {
        if label >= row.len() {
            return Err(Error::Validation(format!(
                "label {label} out of range for {} classes",
                row.len()
            )));
        }
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_sum: f64 = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += -(row[label] - max - log_sum);
        let mut g = softmax(row);
        g[label] -= 1.0;
        for v in &mut g {
            *v /= n;
        }
        grads.push(g);
    }
    Ok((loss / n, grads))
}

/// Per-sample mean of squared reconstruction error plus an L1 penalty on
/// the codes:
///
/// ```text
/// loss = (1/n) * sum_i ( ||recon_i - target_i||^2 + lambda * ||code_i||_1 )
/// ```
///
/// Returns the loss, the gradients on the reconstructions
/// `2 (recon - target) / n`, and the gradients on the codes
/// `lambda * sign(code) / n` with the subgradient at 0 taken as 0. The
/// matching target-side gradient is the negation of the reconstruction
/// gradient; callers that backpropagate into the target apply it themselves.
pub fn mse_l1_batch(
    recons: &[Vec<f64>],
    targets: &[Vec<f64>],
    codes: &[Vec<f64>],
    lambda: f64,
) -> Result<BatchLossGrads> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda {lambda} must be nonnegative")));
    }
    if recons.len() != targets.len() || recons.len() != codes.len() {
        return Err(Error::Shape {
            expected: format!("{} target(s) and code(s)", recons.len()),
            actual: format!("{} and {}", targets.len(), codes.len()),
        });
    }
    let n = recons.len() as f64;
    let mut loss = 0.0;
    let mut d_recons = Vec::with_capacity(recons.len());
    let mut d_codes = Vec::with_capacity(codes.len());
    for ((recon, target), code) in recons.iter().zip(targets.iter()).zip(codes.iter()) {
        if recon.len() != target.len() {
            return Err(Error::Shape {
                expected: format!("reconstruction of {}", target.len()),
                actual: format!("{}", recon.len()),
            });
        }
        let mut d_recon = Vec::with_capacity(recon.len());
        for (r, t) in recon.iter().zip(target.iter()) {
            let e = r - t;
            loss += e * e;
            d_recon.push(2.0 * e / n);
        }
        let mut d_code = Vec::with_capacity(code.len());
        for &s in code {
            loss += lambda * s.abs();
            d_code.push(lambda * sign_or_zero(s) / n);
        }
        d_recons.push(d_recon);
        d_codes.push(d_code);
    }
    Ok((loss / n, d_recons, d_codes))
}

fn sign_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
