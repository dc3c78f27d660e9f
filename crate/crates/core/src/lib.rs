//! Minimum L2-norm transmit-power allocation for distributed BLUE estimation
//! over amplify-and-forward sensor networks, with a generalized-Lloyd
//! codebook for limited feedback and a Monte-Carlo harness.

pub mod allocator;
pub mod cli;
pub mod codebook;
pub mod error;
pub mod estimator;
pub mod model;
pub mod numeric;
pub mod par;
pub mod simkit;

pub use error::{Error, Result};
