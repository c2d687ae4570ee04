//! Sensitivity analysis of softmax classifiers on the perturbation manifold.
//!
//! The crate computes the first-order local influence measure (FI) of an
//! objective under small perturbations of an input, of all parameters, of a
//! single layer, or of an image patch, together with two baselines: the
//! Jacobian norm and Cook's local influence.

pub mod classifier;
pub mod error;
pub mod experiments;
pub mod influence;
pub mod io;
pub mod manifold;
pub mod numerics;

pub use error::{Error, Result};
