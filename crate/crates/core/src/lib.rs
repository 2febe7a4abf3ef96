//! Set-similarity kernel engine.
//!
//! A sample ("bag") is an unordered set of fixed-dimension embedding vectors.
//! This crate computes squared maximum mean discrepancy (MMD) distances
//! between bags, turns the resulting distance matrix into a Mercer kernel,
//! and drives everything downstream of that one precomputed matrix:
//!
//! * kernel machines over the precomputed kernel — epsilon-insensitive
//!   regression, binary classification and ranking-based survival models
//!   ([`machines`]),
//! * top-k retrieval by kernel-row sorting and its majority-vote metric
//!   ([`retrieval`]),
//! * perturbation-based per-element sensitivity scores and k-medoid
//!   representative selection ([`explain`]),
//! * secondary-modality kernels and unweighted multi-kernel fusion
//!   ([`fusion`]),
//! * evaluation statistics and structure discovery ([`analysis`]).
//!
//! Core math is generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the default `f64` instantiation
//! used by the command-line tools. On-disk formats are fixed independently
//! of the in-memory scalar: bag payloads are 32-bit floats, matrix payloads
//! 64-bit.

pub mod analysis;
pub mod bags;
pub mod error;
pub mod explain;
pub mod fusion;
pub mod machines;
pub mod matrix;
pub mod mmd;
pub mod retrieval;
pub mod scalar;

mod linalg;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default runtime scalar. Accumulation happens at 64-bit precision.
pub type Scalar = f64;

/// An embedding bag at default precision.
pub type Bag = bags::EmbeddingBag<Scalar>;
/// A loaded dataset at default precision.
pub type Dataset = bags::Dataset<Scalar>;
/// A squared-MMD distance matrix at default precision.
pub type Distances = matrix::DistanceMatrix<Scalar>;
/// A similarity kernel matrix at default precision.
pub type Similarities = matrix::KernelMatrix<Scalar>;
/// A trained kernel machine at default precision.
pub type Model = machines::DualModel<Scalar>;
