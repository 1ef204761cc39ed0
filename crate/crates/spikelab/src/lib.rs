//! Rank-one matrix estimation on spheres: exact asymptotics and the Monte
//! Carlo machinery to confront them at finite size.
//!
//! The observation is an `n_u x n_v` matrix `Y = sqrt(lambda/n) u v^T + Z`
//! with `u`, `v` drawn uniformly from spheres and `Z` standard Gaussian
//! noise. The crate provides
//!
//! * closed-form limits for the mutual information and matrix MMSE, with an
//!   independent numeric solver as a cross-check ([`theory`]),
//! * a Gibbs sampler over the posterior and MMSE estimators built on it
//!   ([`gibbs`]),
//! * a power-iteration spectral baseline ([`spectral`]),
//! * shared instance generation with reproducible seeding ([`model`]).

pub mod error;
pub mod gibbs;
pub mod model;
pub mod spectral;
pub mod theory;

/// Crate version, recorded in result manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use model::{
    derive_seed, generate_instance, sample_spherical, Dimensions, Hyperparams, InstanceRecord,
    ProblemInstance,
};
