//! Part Prototype Network for zero-shot and generalized zero-shot learning
//! over pre-extracted region features.
//!
//! The pipeline runs bundle → [`training::train`] → [`eval`]. Everything is
//! deterministic under a fixed seed and independent of the thread count.

// Dense numeric kernels read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod training;

pub use error::{Error, ErrorClass, Result};
