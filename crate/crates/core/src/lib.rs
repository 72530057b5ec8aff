//! Stochastic-gradient MCMC with adaptive thermostats.
//!
//! The crate implements four minibatch samplers over a shared model layer:
//!
//! - a covariance-compensated thermostat integrated with a palindromic
//!   B-A-O-D-C-D-O-A-B splitting, whose C step applies the exact flow of the
//!   covariance friction through a matrix-free exponential action,
//! - the original covariance-controlled thermostat baseline (moving-average
//!   covariance estimate, nonsymmetric Euler-type update),
//! - a Nosé–Hoover thermostat baseline, and
//! - stochastic-gradient HMC with fixed friction.
//!
//! Target models cover a Gaussian toy problem with known injected force
//! noise, Bayesian linear regression (with its analytic Gaussian posterior
//! for 2-Wasserstein evaluation), and Bayesian logistic regression. The
//! `harness` module adds dataset ingestion (IDX, LIBSVM, synthetic),
//! experiment configuration, parallel chain orchestration, and CSV metric
//! emission; the `sgmcmc` binary is a thin CLI over it.

pub mod error;
pub mod expmv;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod samplers;

pub use error::{Error, Result};
