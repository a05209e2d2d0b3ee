//! View-unaligned multi-view clustering.
//!
//! Jointly learns shared anchors and per-view bipartite anchor graphs,
//! recovers cross-view correspondences of shuffled views by scoring
//! 2-step Markov transitions between graph columns, and clusters the
//! fused graph through a truncated spectral embedding.
//!
//! The crate is organized around the solver pipeline:
//!
//! - [`linalg`]: dense kernels (SVD, Procrustes, simplex projection,
//!   k-means, optimal assignment)
//! - [`data`]: dataset representation, on-disk format, and synthesis of
//!   view-unaligned datasets with recorded ground truth
//! - [`model`]: optimization state and the closed-form block updates
//! - [`alignment`]: permutation derivation and template selection
//! - [`solver`]: the alternating outer loop, fusion, and final clustering
//! - [`metrics`]: clustering and alignment quality measures

pub mod alignment;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod solver;

pub use error::{Error, Result};

/// Matrix type used throughout: dense, column-major, `f64`.
pub type Mat = nalgebra::DMatrix<f64>;
