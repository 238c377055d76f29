//! Graph neural convection-diffusion for node classification.
//!
//! Node features evolve under a graph PDE made of an attention-driven
//! diffusion term plus a learned convection term,
//!
//! ```text
//! dx_i/dt = sum_j a(x_i, x_j) (x_j - x_i) + sum_j tanh(W (x_j - x_i)) * x_j
//! ```
//!
//! integrated with fixed-step explicit solvers between an MLP encoder and an
//! affine decoder, and trained end to end by differentiating through the
//! unrolled solver.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod dataset;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod homophily;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod records;
pub mod solver;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
