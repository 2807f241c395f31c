//! Information criteria for singular statistical models.
//!
//! The crate computes, from posterior draws:
//!
//! * **WBIC**: the tempered-posterior mean of Σ −log p(xᵢ|θ) at
//!   β = β₀ / log n;
//! * **LS**: n·Tₙ + λ log n, where Tₙ is the empirical loss of the Bayes
//!   predictive distribution computed from β = 1 draws;
//! * **sBIC** (plug-in form): Σ −log p(xᵢ|θ̂) + λ log n;
//! * **λ̂**: the learning coefficient estimated from two WBIC runs.
//!
//! Exact learning coefficients (reduced-rank regression, regular models, the
//! Gaussian-mixture upper bound) live in [`lambda_coeff`]; closed-form
//! answers for the conjugate normal-mean model live in [`oracle`].
//!
//! The crate is `no_std` with `alloc` unless the `std` feature is enabled.
//! IO, configuration and the CLI are in the companion `lscrit` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod criteria;
pub mod error;
pub mod lambda_coeff;
pub mod math;
pub mod model;
pub mod oracle;
pub mod sampler;

pub use error::{Error, Result};
