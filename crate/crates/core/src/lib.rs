//! Bayesian characterization of a four-level superconducting qudit with an
//! additive Gaussian-process model discrepancy.
//!
//! The crate provides the full inference pipeline as pure, value-semantic
//! building blocks:
//!
//! * [`qudit`] — the device model: Hamiltonians in the rotating frame,
//!   decay/dephasing operators, and Lindblad propagation by matrix
//!   exponentiation.
//! * [`ramsey`] — synthesis of Ramsey `k <-> k+1` experiments (state
//!   preparation, detuned pi/2 pulses, dark-time sweeps, parity averaging)
//!   and spectral analysis of the resulting population curves.
//! * [`kernels`] — covariance kernels, the analytical Mercer low-rank
//!   factorization of the squared-exponential kernel, Woodbury algebra, and
//!   truncated eigen-decompositions.
//! * [`likelihood`] — numerically stable Gaussian log-likelihood backends
//!   (dense, low-rank, marginalized) and the joint Ramsey likelihood.
//! * [`inference`] — Metropolis-within-Gibbs sampling over device parameters
//!   and per-experiment noise hyper-parameters.
//! * [`predict`] — Gaussian-process predictive conditionals for fixed and
//!   posterior-sampled device parameters.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the
//! command-line driver live in the companion `quditchar` crate.

#![cfg_attr(not(test), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod error;
pub mod inference;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod math;
pub mod predict;
pub mod qudit;
pub mod ramsey;

pub use error::{Error, Result};
