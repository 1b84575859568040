//! Joint matrix decomposition and Bayesian regression for cohorts of
//! correlation matrices paired with scalar scores.
//!
//! - [`cohort`]: data model, manifest I/O, synthetic cohorts, scree spectrum.
//! - [`cpc`]: common-principal-components dictionary learning.
//! - [`bayes_regress`]: BLR and spike-and-slab Gibbs samplers on the loadings.
//! - [`joint_model`]: joint Metropolis-within-Gibbs sampler over basis,
//!   loadings and regression weights.
//! - [`diagnostics`]: metrics, MCMC diagnostics and the cross-validation harness.
//! - [`cli`]: the `cpcbayes` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes_regress;
pub mod cli;
pub mod cohort;
pub mod cpc;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod joint_model;
pub mod linalg;
pub mod stats;

pub use error::{Error, Result};
