//! Adjusted mutual information between two labelings.
//!
//! Natural logarithms throughout. The expectation of mutual information is
//! computed exactly under the permutation (hypergeometric) model, not by
//! sampling, and the score is normalized by `max(H(U), H(V))`:
//!
//! ```text
//! AMI = (MI - EMI) / (max(H(U), H(V)) - EMI)
//! ```
//!
//! Identical set partitions score exactly 1.0. When the normalizer equals
//! the expectation (both partitions trivial) the score is defined as 0 for
//! non-identical partitions.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Co-occurrence table between two labelings, with marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    /// table[i][j] = number of samples in cluster i of U and cluster j of V.
    pub table: Vec<Vec<u64>>,
    /// Row marginals (cluster sizes of U).
    pub a: Vec<u64>,
    /// Column marginals (cluster sizes of V).
    pub b: Vec<u64>,
    /// Total sample count.
    pub n: u64,
}

/// Builds the contingency table of two equal-length labelings. Cluster
/// indices are assigned by first occurrence, which fixes all summation
/// orders and makes results bit-reproducible.
pub fn contingency(u: &[usize], v: &[usize]) -> Result<Contingency> {
    if u.len() != v.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", u.len()),
            actual: format!("{}", v.len()),
        });
    }
    if u.is_empty() {
        return Err(Error::Validation("labelings must be nonempty".into()));
    }

    let dense = |labels: &[usize]| {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut next = 0usize;
        labels
            .iter()
            .map(|&l| {
                *map.entry(l).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                })
            })
            .collect::<Vec<usize>>()
    };
    let du = dense(u);
    let dv = dense(v);
    let r = du.iter().max().unwrap() + 1;
    let c = dv.iter().max().unwrap() + 1;

    let mut table = vec![vec![0u64; c]; r];
    for (&i, &j) in du.iter().zip(dv.iter()) {
        table[i][j] += 1;
    }
    let a: Vec<u64> = table.iter().map(|row| row.iter().sum()).collect();
    let mut b = vec![0u64; c];
    for row in &table {
        for (j, &v) in row.iter().enumerate() {
            b[j] += v;
        }
    }
    Ok(Contingency { table, a, b, n: u.len() as u64 })
}

/// Entropy of a cluster-size marginal, in nats.
pub fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information of the contingency table, in nats.
pub fn mutual_information(c: &Contingency) -> f64 {
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * ((n * nij) / (c.a[i] as f64 * c.b[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Exact expected mutual information under the permutation model with the
/// observed marginals. For every cell the inner sum runs over the feasible
/// hypergeometric support; log-factorials come from a cumulative table.
pub fn expected_mutual_information(c: &Contingency) -> f64 {
    let n = c.n;
    let nf = n as f64;
    // ln_fact[k] = ln(k!)
    let mut ln_fact = vec![0.0f64; (n + 1) as usize];
    for k in 1..=n as usize {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let lf = |k: u64| ln_fact[k as usize];

    let mut emi = 0.0;
    for &ai in &c.a {
        for &bj in &c.b {
            let start = (ai + bj).saturating_sub(n).max(1);
            let end = ai.min(bj);
            for nij in start..=end {
                let term = nij as f64 / nf * ((nf * nij as f64) / (ai as f64 * bj as f64)).ln();
                let ln_prob = lf(ai) + lf(bj) + lf(n - ai) + lf(n - bj)
                    - lf(n)
                    - lf(nij)
                    - lf(ai - nij)
                    - lf(bj - nij)
                    - lf(n + nij - ai - bj);
                emi += term * ln_prob.exp();
            }
        }
    }
    emi
}

/// Canonical form of a labeling: every label replaced by its
/// first-occurrence rank. Two labelings describe the same set partition
/// exactly when their canonical forms are equal.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let mut next = 0usize;
    labels
        .iter()
        .map(|&l| {
            *map.entry(l).or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect()
}

/// Adjusted mutual information of two labelings.
pub fn ami(u: &[usize], v: &[usize]) -> Result<f64> {
    let c = contingency(u, v)?;
    if canonical(u) == canonical(v) {
        // Identical set partitions score exactly 1, including the trivial
        // cases where the normalizer would vanish.
        return Ok(1.0);
    }
    let h_u = entropy(&c.a, c.n);
    let h_v = entropy(&c.b, c.n);
    let mi = mutual_information(&c);
    let emi = expected_mutual_information(&c);
    let denominator = h_u.max(h_v) - emi;
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok((mi - emi) / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Average MI over every permutation of `v`, the definition EMI must
    /// reproduce. Only usable for tiny n.
    fn emi_by_permutation_enumeration(u: &[usize], v: &[usize]) -> f64 {
        fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.to_vec();
                let head = rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }
        let perms = permutations(v);
        let total: f64 = perms
            .iter()
            .map(|p| mutual_information(&contingency(u, p).unwrap()))
            .sum();
        total / perms.len() as f64
    }

    #[test]
    fn identical_labelings_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(1..60);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
            assert_eq!(ami(&labels, &labels).unwrap(), 1.0);
        }
    }

    #[test]
    fn renamed_labels_score_exactly_one() {
        let u = [0, 0, 1, 2, 1, 0];
        let v = [7, 7, 3, 9, 3, 7];
        assert_eq!(ami(&u, &v).unwrap(), 1.0);
    }

    #[test]
    fn four_sample_cross_partition_is_minus_half() {
        let u = [0, 0, 1, 1];
        let v = [0, 1, 0, 1];
        let c = contingency(&u, &v).unwrap();
        assert_eq!(mutual_information(&c), 0.0);

        let emi = expected_mutual_information(&c);
        let emi_oracle = emi_by_permutation_enumeration(&u, &v);
        assert!((emi - emi_oracle).abs() < 1e-12, "emi = {emi}, oracle = {emi_oracle}");
        assert!((emi - 2.0f64.ln() / 3.0).abs() < 1e-12);

        let score = ami(&u, &v).unwrap();
        assert!((score - (-0.5)).abs() < 1e-12, "ami = {score}");
        assert!(score < 0.0);
    }

    #[test]
    fn emi_matches_enumeration_on_assorted_small_cases() {
        let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (vec![0, 0, 1, 1, 2], vec![0, 1, 1, 2, 2]),
            (vec![0, 1, 1, 1], vec![0, 0, 1, 1]),
            (vec![0, 0, 0, 1, 1, 1], vec![0, 1, 2, 0, 1, 2]),
        ];
        for (u, v) in cases {
            let c = contingency(&u, &v).unwrap();
            let emi = expected_mutual_information(&c);
            let oracle = emi_by_permutation_enumeration(&u, &v);
            assert!((emi - oracle).abs() < 1e-10, "u = {u:?}, v = {v:?}: {emi} vs {oracle}");
        }
    }

    #[test]
    fn trivial_against_nontrivial_is_zero() {
        // H(U) = 0, so MI = EMI = 0 and the score falls to 0.
        let u = [0, 0, 0, 0];
        let v = [0, 1, 2, 3];
        assert_eq!(ami(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(ami(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn random_permutation_of_labels_against_itself_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut labels: Vec<usize> = (0..40).map(|_| rng.gen_range(0..7)).collect();
        labels.shuffle(&mut rng);
        assert_eq!(ami(&labels, &labels).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn ami_is_symmetric(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 2..40)
        ) {
            let u: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let v: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let uv = ami(&u, &v).unwrap();
            let vu = ami(&v, &u).unwrap();
            prop_assert!((uv - vu).abs() < 1e-12, "ami(u,v) = {}, ami(v,u) = {}", uv, vu);
        }

        #[test]
        fn ami_never_exceeds_one(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..30)
        ) {
            let u: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let v: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(ami(&u, &v).unwrap() <= 1.0 + 1e-12);
        }
    }
}
