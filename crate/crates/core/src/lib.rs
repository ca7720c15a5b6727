//! Information-theoretic toolkit for self-supervised learning on
//! piecewise-affine encoders.
//!
//! The crate covers the data model (Gaussian mixtures with low-rank tangent
//! covariances), exact affine pushforwards through ReLU-style networks,
//! mixture-entropy estimators, a family of differentiable SSL objectives, a
//! small training loop, and an evaluator for a downstream generalization
//! bound whose terms are all measured on concrete data.

pub mod cpa_net;
pub mod datagen;
pub mod entropy;
pub mod error;
pub mod gaussian;
pub mod genbound;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod ssl_losses;
pub mod stats_validation;
pub mod trainer;

pub use error::{Error, Result};
pub use nalgebra;
