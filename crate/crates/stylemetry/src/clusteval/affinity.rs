//! Affinity propagation clustering.
//!
//! Exemplars emerge from damped responsibility/availability message passing
//! over a similarity matrix whose diagonal holds the preference. Updates run
//! in a fixed order (all responsibilities, then all availabilities, both
//! from the freshly damped values), so results are deterministic.
//!
//! Uniform similarity structure (every preference equal and every
//! off-diagonal similarity equal, which includes all two-point systems) is
//! decided directly: such systems have a symmetric fixed point that message
//! passing cannot break, so the preference is compared against the shared
//! similarity instead, matching the behavior of the reference
//! implementations.

use crate::error::{Error, Result};

/// Dense square similarity matrix; `data[i * n + j] = s(i, j)` and the
/// diagonal holds the preference.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Message-passing controls. Damping mixes each new message with the old
/// one: `new = damping * old + (1 - damping) * computed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_iter: usize,
}

impl Default for ApOptions {
    fn default() -> Self {
        ApOptions { damping: 0.5, max_iter: 200, convergence_iter: 15 }
    }
}

/// Clustering outcome. Labels are exemplar point indices, so every
/// exemplar labels itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub exemplars: Vec<usize>,
    pub n_clusters: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Negative squared Euclidean similarity with the given preference on the
/// diagonal.
pub fn similarity(points: &[Vec<f64>], preference: f64) -> Result<SimilarityMatrix> {
    if points.is_empty() {
        return Err(Error::Validation("similarity needs at least one point".into()));
    }
    if !preference.is_finite() {
        return Err(Error::Validation(format!("preference {preference} must be finite")));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Shape {
                expected: format!("point of dimension {dim}"),
                actual: format!("point {i} of dimension {}", p.len()),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("point {i} has non-finite coordinates")));
        }
    }

    let n = points.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = preference;
        for j in (i + 1)..n {
            let d2: f64 = points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            data[i * n + j] = -d2;
            data[j * n + i] = -d2;
        }
    }
    Ok(SimilarityMatrix { n, data })
}

/// Runs affinity propagation until the exemplar set is unchanged for
/// `convergence_iter` consecutive iterations or `max_iter` is reached.
///
/// If no exemplar has emerged at the iteration cap, the result is flagged
/// non-converged and every point becomes its own singleton so the caller
/// can decide how to treat the run.
pub fn affinity_propagation(s: &SimilarityMatrix, opts: &ApOptions) -> Result<ClusterResult> {
    let n = s.n;
    if s.data.len() != n * n {
        return Err(Error::Shape {
            expected: format!("{n}x{n} similarity matrix"),
            actual: format!("{} entries", s.data.len()),
        });
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("similarity matrix has non-finite entries".into()));
    }
    if !(0.5..1.0).contains(&opts.damping) {
        return Err(Error::Config(format!("damping {} must be in [0.5, 1)", opts.damping)));
    }
    if opts.convergence_iter < 1 || opts.max_iter < opts.convergence_iter {
        return Err(Error::Config(format!(
            "need max_iter >= convergence_iter >= 1, got {} and {}",
            opts.max_iter, opts.convergence_iter
        )));
    }

    if let Some(result) = degenerate_case(s) {
        return Ok(result);
    }

    let mut r = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let damping = opts.damping;
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    for it in 1..=opts.max_iter {
        iterations = it;

        // Responsibilities: r(i,k) <- s(i,k) - max_{k' != k} (a(i,k') + s(i,k')).
        for i in 0..n {
            let row = i * n;
            let mut max1 = f64::NEG_INFINITY;
            let mut max2 = f64::NEG_INFINITY;
            let mut arg1 = 0usize;
            for j in 0..n {
                let v = a[row + j] + s.data[row + j];
                if v > max1 {
                    max2 = max1;
                    max1 = v;
                    arg1 = j;
                } else if v > max2 {
                    max2 = v;
                }
            }
            for j in 0..n {
                let challenger = if j == arg1 { max2 } else { max1 };
                let computed = s.data[row + j] - challenger;
                r[row + j] = damping * r[row + j] + (1.0 - damping) * computed;
            }
        }

        // Availabilities from the freshly damped responsibilities:
        // a(k,k) <- sum_{i != k} max(0, r(i,k))
        // a(i,k) <- min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        for k in 0..n {
            let mut sum_pos = 0.0;
            for i in 0..n {
                if i != k {
                    sum_pos += r[i * n + k].max(0.0);
                }
            }
            for i in 0..n {
                let computed = if i == k {
                    sum_pos
                } else {
                    (r[k * n + k] + sum_pos - r[i * n + k].max(0.0)).min(0.0)
                };
                a[i * n + k] = damping * a[i * n + k] + (1.0 - damping) * computed;
            }
        }

        let current: Vec<usize> = (0..n).filter(|&k| r[k * n + k] + a[k * n + k] > 0.0).collect();
        if current == exemplars {
            stable += 1;
        } else {
            exemplars = current;
            stable = 0;
        }
        if stable >= opts.convergence_iter && !exemplars.is_empty() {
            converged = true;
            break;
        }
    }

    if exemplars.is_empty() {
        // No exemplar emerged: report singletons and let the caller decide.
        return Ok(ClusterResult {
            labels: (0..n).collect(),
            exemplars: (0..n).collect(),
            n_clusters: n,
            converged: false,
            iterations,
        });
    }

    Ok(ClusterResult {
        labels: assign_labels(s, &exemplars),
        n_clusters: exemplars.len(),
        exemplars,
        converged,
        iterations,
    })
}

/// Uniform similarity structure is decided without message passing: it has
/// no gradient for the messages to follow (any two-point system is the
/// smallest instance). Preference above the shared off-diagonal similarity
/// elects every point; otherwise the first point is the single exemplar.
fn degenerate_case(s: &SimilarityMatrix) -> Option<ClusterResult> {
    let n = s.n;
    if n == 1 {
        return Some(ClusterResult {
            labels: vec![0],
            exemplars: vec![0],
            n_clusters: 1,
            converged: true,
            iterations: 0,
        });
    }
    let preference = s.get(0, 0);
    let off = s.get(0, 1);
    let uniform = (0..n).all(|i| {
        (0..n).all(|j| {
            let v = s.get(i, j);
            if i == j {
                v == preference
            } else {
                v == off
            }
        })
    });
    if !uniform {
        return None;
    }
    if preference > off {
        Some(ClusterResult {
            labels: (0..n).collect(),
            exemplars: (0..n).collect(),
            n_clusters: n,
            converged: true,
            iterations: 0,
        })
    } else {
        Some(ClusterResult {
            labels: vec![0; n],
            exemplars: vec![0],
            n_clusters: 1,
            converged: true,
            iterations: 0,
        })
    }
}

/// Assigns every point to its maximum-similarity exemplar, with equal
/// similarity breaking toward the lowest exemplar index. Exemplars label
/// themselves regardless of their preference entry.
fn assign_labels(s: &SimilarityMatrix, exemplars: &[usize]) -> Vec<usize> {
    (0..s.n)
        .map(|i| {
            if exemplars.contains(&i) {
                return i;
            }
            let mut best = exemplars[0];
            let mut best_sim = s.get(i, exemplars[0]);
            for &k in &exemplars[1..] {
                let sim = s.get(i, k);
                if sim > best_sim {
                    best_sim = sim;
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusteval::ami::ami;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob_points(rng: &mut ChaCha8Rng, centers: &[[f64; 2]], per: usize, spread: f64) -> Vec<Vec<f64>> {
        let mut points = Vec::new();
        for c in centers {
            for _ in 0..per {
                points.push(vec![
                    c[0] + spread * (rng.gen::<f64>() * 2.0 - 1.0),
                    c[1] + spread * (rng.gen::<f64>() * 2.0 - 1.0),
                ]);
            }
        }
        points
    }

    fn median_off_diagonal(s: &SimilarityMatrix) -> f64 {
        let mut vals = Vec::new();
        for i in 0..s.n {
            for j in 0..s.n {
                if i != j {
                    vals.push(s.get(i, j));
                }
            }
        }
        vals.sort_by(f64::total_cmp);
        let m = vals.len();
        if m % 2 == 1 {
            vals[m / 2]
        } else {
            0.5 * (vals[m / 2 - 1] + vals[m / 2])
        }
    }

    #[test]
    fn similarity_examples() {
        let s = similarity(&[vec![1.0, 2.0], vec![1.0, 2.0]], -1.0).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
        let s = similarity(&[vec![0.0], vec![3.0]], -1.0).unwrap();
        assert_eq!(s.get(0, 1), -9.0);
        assert_eq!(s.get(1, 0), -9.0);
        assert_eq!(s.get(0, 0), -1.0);
    }

    #[test]
    fn similarity_rejects_non_finite_points() {
        assert!(similarity(&[vec![f64::NAN]], -1.0).is_err());
    }

    #[test]
    fn single_point_is_its_own_exemplar() {
        let s = similarity(&[vec![4.2]], -1.0).unwrap();
        let result = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert_eq!(result.n_clusters, 1);
        assert_eq!(result.exemplars, vec![0]);
        assert_eq!(result.labels, vec![0]);
        assert!(result.converged);
    }

    #[test]
    fn two_point_preference_threshold() {
        // Points at distance 3: the threshold sits at -d^2 = -9.
        let points = vec![vec![0.0], vec![3.0]];
        let s = similarity(&points, -8.999).unwrap();
        let split = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert_eq!(split.n_clusters, 2);

        let s = similarity(&points, -9.001).unwrap();
        let merged = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert_eq!(merged.n_clusters, 1);

        let s = similarity(&points, -90.0).unwrap();
        let merged = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert_eq!(merged.n_clusters, 1);
    }

    #[test]
    fn three_tight_triplets_yield_three_clusters() {
        let mut points = Vec::new();
        for c in [[0.0, 0.0], [10.0, 10.0], [20.0, 0.0]] {
            points.push(vec![c[0], c[1]]);
            points.push(vec![c[0] + 0.1, c[1]]);
            points.push(vec![c[0], c[1] + 0.1]);
        }
        let s0 = similarity(&points, 0.0).unwrap();
        let s = similarity(&points, median_off_diagonal(&s0)).unwrap();
        let result = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.n_clusters, 3);
        for group in 0..3 {
            let base = result.labels[group * 3];
            assert_eq!(result.labels[group * 3 + 1], base);
            assert_eq!(result.labels[group * 3 + 2], base);
        }
    }

    #[test]
    fn gaussian_blobs_recover_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points =
            blob_points(&mut rng, &[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]], 10, 0.1);
        let s0 = similarity(&points, 0.0).unwrap();
        let s = similarity(&points, median_off_diagonal(&s0)).unwrap();
        let result = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert!(result.converged);
        assert_eq!(result.n_clusters, 3);

        let truth: Vec<usize> = (0..30).map(|i| i / 10).collect();
        assert_eq!(ami(&truth, &result.labels).unwrap(), 1.0);
    }

    #[test]
    fn exemplars_label_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = blob_points(&mut rng, &[[0.0, 0.0], [6.0, 1.0]], 8, 0.3);
        let s0 = similarity(&points, 0.0).unwrap();
        let s = similarity(&points, median_off_diagonal(&s0)).unwrap();
        let result = affinity_propagation(&s, &ApOptions::default()).unwrap();
        for &e in &result.exemplars {
            assert_eq!(result.labels[e], e);
        }
        for &l in &result.labels {
            assert!(result.exemplars.contains(&l));
        }
    }

    #[test]
    fn cluster_count_is_monotone_in_preference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points =
            blob_points(&mut rng, &[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]], 10, 0.1);
        let mut last = 0usize;
        for pref in [-200.0, -50.0, -10.0, -1.0, -0.1, -0.01] {
            let s = similarity(&points, pref).unwrap();
            let result = affinity_propagation(&s, &ApOptions::default()).unwrap();
            assert!(
                result.n_clusters >= last,
                "clusters dropped from {last} to {} at preference {pref}",
                result.n_clusters
            );
            last = result.n_clusters;
        }
    }

    #[test]
    fn identical_options_give_identical_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points = blob_points(&mut rng, &[[0.0, 0.0], [4.0, 4.0]], 10, 0.5);
        let s0 = similarity(&points, 0.0).unwrap();
        let s = similarity(&points, median_off_diagonal(&s0)).unwrap();
        let a = affinity_propagation(&s, &ApOptions::default()).unwrap();
        let b = affinity_propagation(&s, &ApOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_options_are_rejected() {
        let s = similarity(&[vec![0.0], vec![1.0]], -1.0).unwrap();
        let bad_damping = ApOptions { damping: 0.4, ..ApOptions::default() };
        assert!(affinity_propagation(&s, &bad_damping).is_err());
        let bad_iters = ApOptions { max_iter: 5, convergence_iter: 10, damping: 0.5 };
        assert!(affinity_propagation(&s, &bad_iters).is_err());
    }
}
