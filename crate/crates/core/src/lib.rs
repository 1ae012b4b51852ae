//! Simulation and parameter estimation for linear evolution equations driven
//! by space-only Gaussian noise.
//!
//! Two models are covered, both diagonal in the eigenbasis `h_k` of the
//! operator `A` (`A h_k = mu_k h_k`):
//!
//! * the shell model, `u_k(t) = u_k(0) exp(-(theta mu_k + nu_k) t + (sigma q_k + p_k) xi_k t)`;
//! * the additive model, `u_k(t) = u_k(0) e^{-theta mu_k t} + sigma q_k / (theta mu_k) (1 - e^{-theta mu_k t}) xi_k`.
//!
//! Modules: [`spectra`] (coefficient sequences and model specs), [`simulate`]
//! (exact trajectories), [`conditions`] (well-posedness and regularity),
//! [`shell_inference`], [`additive_inference`], [`montecarlo`] (replicated
//! campaigns) and [`io`] (configs, CSV and manifests used by the CLI).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod additive_inference;
pub mod conditions;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod report;
pub mod shell_inference;
pub mod simulate;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
