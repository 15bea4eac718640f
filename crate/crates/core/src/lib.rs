//! Graph spectral features for thermal image streams and online domain-adaptive
//! viability classification.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod onda;
pub mod preprocess;
pub mod report;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
