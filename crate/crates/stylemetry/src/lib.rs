//! Driving-style representation learning from GPS trips.
//!
//! The pipeline turns raw 1 Hz GPS trips into fixed-size statistical feature
//! matrices, learns a segment-level representation with a stacked-GRU network
//! whose bottleneck is trained jointly as an autoencoder and a classifier,
//! aggregates segment codes into trip-level vectors, and uses those vectors
//! for driver-count estimation (affinity propagation + adjusted mutual
//! information) and driver identification.
//!
//! Modules follow the data flow:
//!
//! 1. [`ingest`]: parse and validate trip CSV files into [`ingest::RawTrip`].
//! 2. [`featurize`]: slice trips into segments and frames, emit 35x128
//!    [`featurize::FeatureMatrix`] values.
//! 3. [`nn`]: minimal dense numeric core (tensors, GRU/dense/dropout layers,
//!    losses, ADADELTA, gradient checking).
//! 4. [`arnet`]: the full network, its joint loss, training loop, and
//!    checkpoint serialization.
//! 5. [`trip2vec`]: segment-code aggregation into per-trip vectors and
//!    confidence-weighted trip prediction.
//! 6. [`clusteval`]: affinity propagation and adjusted mutual information.
//! 7. [`experiments`]: synthetic telematics generation plus the estimation
//!    and identification benchmark harnesses.
//!
//! Every operation is deterministic given its seed; benchmark repeats derive
//! independent RNG streams so thread scheduling cannot change results.

pub mod arnet;
pub mod clusteval;
pub mod error;
pub mod experiments;
pub mod featurize;
pub mod ingest;
pub mod nn;
pub mod trip2vec;

pub use error::{Error, Result};
