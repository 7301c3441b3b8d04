//! Minimal dense numeric core.
//!
//! Everything the network needs and nothing more: a flat row-major tensor,
//! parameters with ADADELTA state, dense and GRU layers with exact backward
//! passes, inverted dropout, the two losses, and a finite-difference
//! gradient checker. All math is 64-bit and deterministic; no computation
//! graph, the backward passes are written out by hand.

pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod linalg;
pub mod loss;
pub mod param;

pub use dense::{Activation, Dense, DenseGrads};
pub use dropout::{dropout, sample_mask, Phase};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use gru::{Gru, GruGrads, GruTrace};
pub use init::xavier_uniform;
pub use loss::{mse_l1_batch, softmax, softmax_xent_batch};
pub use param::{AdaDelta, Param, Tensor};
