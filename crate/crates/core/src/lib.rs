//! REML variance-component estimation under a misspecified high-dimensional
//! linear mixed model, together with the random-matrix limits that describe
//! its behaviour.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: the Marčenko–Pastur law, resolvent moments `h_{k,l}(γ)`
//!   and empirical spectral diagnostics.
//! * [`simulate`]: allele frequencies, genotype matrices, standardized and
//!   Gaussian designs, phenotypes under a sparse truth.
//! * [`reml`]: projection onto error contrasts, the scalar REML equations
//!   and their solution.
//! * [`asymptotics`]: closed-form limits of the estimator.
//! * [`harness`]: experiment configuration, replications, sweeps and CSV
//!   output.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
mod error;
pub mod harness;
pub mod linalg;
pub mod reml;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
