//! Weight initialization.

use rand::Rng;

/// Xavier/Glorot uniform samples in
/// `[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]`,
/// row-major `out_dim x in_dim`. Biases are zero-initialized elsewhere.
pub fn xavier_uniform<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Vec<f64> {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    (0..out_dim * in_dim).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_stay_within_the_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let limit = (6.0 / 48.0f64).sqrt();
        let w = xavier_uniform(16, 32, &mut rng);
        assert_eq!(w.len(), 512);
        assert!(w.iter().all(|v| v.abs() <= limit));
        // Not degenerate: both signs appear.
        assert!(w.iter().any(|&v| v > 0.0) && w.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(xavier_uniform(4, 4, &mut a), xavier_uniform(4, 4, &mut b));
    }
}
