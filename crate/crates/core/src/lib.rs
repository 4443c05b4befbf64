//! Projection-free stochastic optimization over bounded polytopes.
//!
//! Standard and away-step Frank-Wolfe with sampled gradients, the analysis
//! constants that govern them, and a replicated experiment harness.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod frank_wolfe;
pub mod geometry;
pub mod harness;
pub mod objectives;
pub mod oracle;
pub mod problem;

pub use error::{Error, Result};
