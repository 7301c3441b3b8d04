//! Clustering and clustering-quality scoring: affinity propagation over
//! similarity matrices and adjusted mutual information between labelings.

pub mod affinity;
pub mod ami;

pub use affinity::{affinity_propagation, similarity, ApOptions, ClusterResult, SimilarityMatrix};
pub use ami::{ami, contingency, entropy, expected_mutual_information, mutual_information, Contingency};

/// Absolute error between a true count and an estimate.
pub fn abs_error(true_k: usize, est_k: usize) -> usize {
    true_k.abs_diff(est_k)
}
