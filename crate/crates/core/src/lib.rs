//! MambaSL: a single-layer selective state space classifier for multivariate
//! time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`] reads the UEA `.ts` archive format, normalizes, and batches.
//! - [`ssm`] is the modular selective scan with time-invariant / time-variant
//!   switches for the step size and the input / output maps.
//! - [`block`] wraps the scan in a gated Mamba block.
//! - [`model`] adds the scaled input convolution, the per-step classifier and
//!   the aggregation heads (including multi-head adaptive pooling).
//! - [`train`] holds the loss, RAdam, the training loop, metrics, grid search
//!   and checkpoint persistence.
//!
//! Every numeric routine is generic over [`Real`] so the same code runs in
//! `f32` for training and in `f64` for gradient checks.

pub mod block;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod real;
pub mod rng;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
