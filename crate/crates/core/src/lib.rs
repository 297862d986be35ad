//! Prediction-based gradient compression for distributed gradient descent.
//!
//! Each agent predicts its gradient from the last `s` reconstructions shared
//! with the server, transmits the least-squares coefficients, and sends the
//! prediction residual (stochastically quantized and Huffman coded) only when
//! it exceeds a fraction of the gradient norm. The crate also carries the
//! comparison schemes, a bit ledger, and run-time checks of the convergence
//! analysis.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected; the
// numeric kernels index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod codec;
pub mod config;
pub mod error;
pub mod experiment;
pub mod predictor;
pub mod protocol;
pub mod rng;
pub mod theory;
pub mod trigger;
pub mod vector;
pub mod wire;
pub mod workload;

pub use error::{Error, Result};
