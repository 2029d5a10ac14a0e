//! Analysis toolkit for population-vector encodings of visual stimuli.
//!
//! The pipeline runs from synthetic stimuli and spike trains
//! ([`stimgen`], [`preprocess`]) through photometric feature binning
//! ([`stimfeat`]) to unsupervised ([`clustering`], [`indices`], [`sweep`])
//! and supervised ([`classify`]) decoding and 2-D maps ([`embed`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the pipeline uses.

// `!(x > 0.0)` rejects NaN on purpose; dense kernels index several arrays at once
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classify;
pub mod clustering;
pub mod dataio;
pub mod embed;
pub mod error;
pub mod indices;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod stimfeat;
pub mod stimgen;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = dataio::Matrix<f64>;
pub type ResponseMatrix64 = dataio::ResponseMatrix<f64>;
pub type DistanceMatrix64 = dataio::DistanceMatrix<f64>;
pub type SimilarityMatrix64 = dataio::SimilarityMatrix<f64>;
