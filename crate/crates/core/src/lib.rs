//! Stacked conformal prediction for regression.
//!
//! Base learners are cross-fitted into second-level features, a linear
//! meta-learner is fitted on them, and full conformal prediction intervals
//! are computed for the meta-learner by bisection on the conformity test.

pub mod conformal;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod folding;
pub mod learners;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod stack;
pub mod synth;

pub use error::{Error, Result};
