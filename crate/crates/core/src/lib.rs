//! Direct and indirect data-driven predictive control of stochastic SISO LTI
//! systems, with a seeded Monte-Carlo harness comparing the two designs.
//!
//! - [`matops`]: Hankel/Toeplitz constructions, SVD pseudoinverse, least squares.
//! - [`lti`]: ground-truth systems, simulation, input-output operators.
//! - [`task`]: quadratic tracking task, certainty-equivalent inputs, suboptimality gap.
//! - [`direct`]: direct design over the span of recorded behaviors and its implicit model error.
//! - [`indirect`]: kernel identification by constrained least squares and model assembly.
//! - [`experiments`]: datasets, trials, sweeps, statistics, tail-bound verification.
//! - [`cli`]: configuration files and the command-line runner.

pub mod cli;
pub mod direct;
pub mod error;
pub mod experiments;
pub mod indirect;
pub mod lti;
pub mod matops;
pub mod task;

pub use error::{Error, Result};
