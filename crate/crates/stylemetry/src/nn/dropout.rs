//! Inverted dropout: kept activations are rescaled at train time so
//! inference is the identity map.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// Draws a dropout mask whose entries are 0 with probability `p_drop` and
/// `1 / (1 - p_drop)` otherwise. Applying the mask elementwise performs the
/// forward pass; the backward pass multiplies by the same mask.
pub fn sample_mask<R: Rng>(dim: usize, p_drop: f64, rng: &mut R) -> Vec<f64> {
    let keep_scale = 1.0 / (1.0 - p_drop);
    (0..dim).map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { keep_scale }).collect()
}

/// Forward dropout. Train phase: y = x . mask with a freshly drawn mask.
/// Infer phase: y = x and the mask is all ones, so downstream code can
/// treat both phases uniformly.
pub fn dropout<R: Rng>(
    x: &[f64],
    p_drop: f64,
    phase: Phase,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Config(format!("dropout probability {p_drop} must be in [0, 1)")));
    }
    let mask = match phase {
        Phase::Train => sample_mask(x.len(), p_drop, rng),
        Phase::Infer => vec![1.0; x.len()],
    };
    let y = x.iter().zip(mask.iter()).map(|(x_i, m_i)| x_i * m_i).collect();
    Ok((y, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_probability_is_identity_in_both_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = [1.0, -2.0, 3.0];
        let (train, _) = dropout(&x, 0.0, Phase::Train, &mut rng).unwrap();
        let (infer, _) = dropout(&x, 0.0, Phase::Infer, &mut rng).unwrap();
        assert_eq!(train, x.to_vec());
        assert_eq!(infer, x.to_vec());
    }

    #[test]
    fn inference_is_identity_at_any_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = [5.0, 6.0];
        let (y, mask) = dropout(&x, 0.5, Phase::Infer, &mut rng).unwrap();
        assert_eq!(y, x.to_vec());
        assert_eq!(mask, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_probability_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(dropout(&[1.0], 1.0, Phase::Train, &mut rng).is_err());
    }

    #[test]
    fn train_mean_approximates_input() {
        // Inverted scaling keeps the expectation at the input value.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = 3.0;
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (y, _) = dropout(&[c], 0.5, Phase::Train, &mut rng).unwrap();
            sum += y[0];
        }
        let mean = sum / n as f64;
        assert!((mean - c).abs() / c < 0.02, "mean = {mean}");
    }
}
