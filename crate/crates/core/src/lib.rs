//! Numerical laboratory for exchangeable random measures.
//!
//! Samplers for exchangeable arrays and random measures driven by
//! skew-product directing functions, the Gram-matrix decomposition of
//! exchangeable PSD matrices, an exact enumeration engine for the Viana-Bray
//! dilute spin glass, Ruelle cascades and branchingales, and an evaluator and
//! minimizer for the limiting free-energy functional of that model.

// `!(x >= 0.0)` is how NaN gets rejected alongside negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod dovsud;
pub mod erm;
pub mod parisi;
pub mod exchtest;
pub mod error;
pub mod rng;
pub mod skewprod;
pub mod stats;
pub mod vianabray;

pub use error::{Error, Result};
