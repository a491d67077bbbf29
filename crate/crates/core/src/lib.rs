//! Bayesian deep learning for discrete choice.
//!
//! This crate implements a family of discrete choice architectures — a
//! conditional logit, a fully connected multinomial network, and a
//! collapse-to-informed deep model with IIA and non-IIA nonlinear blocks —
//! together with the machinery needed to do approximate Bayesian inference
//! on them:
//!
//! - [`autodiff`]: a small reverse-mode engine over dense `f64` arrays with
//!   gradients available for parameters *and* inputs (input gradients drive
//!   marginal-rate-of-substitution estimates).
//! - [`model`]: the three architectures behind one interface (utilities,
//!   choice probabilities, penalized loss) plus parameter containers.
//! - [`sampler`]: two-step training — SGD on the informed component with the
//!   nonlinear blocks frozen, then stochastic gradient Langevin dynamics over
//!   everything — producing a thinned posterior chain.
//! - [`inference`]: everything computed from a chain: Bayesian-model-average
//!   predictions, MRS and value-of-travel-time distributions, credible
//!   intervals and utility bands, coverage and accuracy metrics.
//! - [`simulation`]: the synthetic-data Monte Carlo study with its analytic
//!   truth oracle and the replication driver.
//! - [`data`]: choice dataset schema, wide-CSV ingestion, standardization,
//!   splits, and minibatching.
//!
//! All numerics are `f64`. Every run is deterministic given its seed: chains,
//! datasets and result tables are bit-reproducible.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod simulation;

pub use error::{Error, Result};
