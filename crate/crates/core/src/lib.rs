//! Exterior-point nonnegative matrix factorization.
//!
//! The exterior method starts from the unconstrained rank-`r` optimum (truncated SVD),
//! rotates it along its orthogonal level set toward the nonnegative orthant with ADMM,
//! restores feasibility with an exterior penalty and projected block coordinate descent,
//! and finishes with HALS until the KKT conditions hold. Interior baselines, a masked
//! completion variant, equivalence analysis and an equal-time / equal-error benchmark
//! engine are built around it.

pub mod analysis;
pub mod datasets;
pub mod error;
pub mod feasibility;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod rotation;
pub mod solvers;
pub mod trace;

pub use error::{Error, Result};
pub use mask::{ObservationMask, SignMask};
pub use matrix::{DenseMatrix, FactorPair};
pub use metrics::{frobenius_objective, masked_objective, negativity, relative_error};
pub use rng::RngSeed;
