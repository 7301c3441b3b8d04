//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::param::Param;

/// Outcome of a gradient check: the worst relative error over all probed
/// coordinates and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: String,
    pub probes: usize,
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_and_grad` must compute the loss and leave each parameter's `grad`
/// holding the full gradient (zeroing any previous content); `loss_only`
/// must be the same deterministic loss without gradient side effects (fixed
/// dropout masks, no RNG). `params_of` exposes the parameters in a stable
/// order. For every parameter, up to `probes_per_param` random coordinates
/// are probed with step `h`; the relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<M>(
    model: &mut M,
    mut loss_and_grad: impl FnMut(&mut M) -> f64,
    mut loss_only: impl FnMut(&mut M) -> f64,
    params_of: fn(&mut M) -> Vec<&mut Param>,
    probes_per_param: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    loss_and_grad(model);
    let (names, analytic): (Vec<String>, Vec<Vec<f64>>) = params_of(model)
        .into_iter()
        .map(|p| (p.name.clone(), p.grad.data.clone()))
        .unzip();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: String::new(), probes: 0 };

    for (pi, grad) in analytic.iter().enumerate() {
        for _ in 0..probes_per_param.min(grad.len()) {
            let i = rng.gen_range(0..grad.len());
            params_of(model)[pi].value.data[i] += h;
            let up = loss_only(model);
            params_of(model)[pi].value.data[i] -= 2.0 * h;
            let down = loss_only(model);
            params_of(model)[pi].value.data[i] += h;

            let numeric = (up - down) / (2.0 * h);
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{}[{i}]", names[pi]);
            }
            report.probes += 1;
        }
    }
    report
}
