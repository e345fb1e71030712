//! Surrogate-based toolkit for building thermal behavior.
//!
//! The pipeline has four stages, each backed by a module:
//!
//! 1. [`sampler`] draws building configurations on parameter grids and runs the
//!    reference simulator ([`refsim`]) to build a training dataset,
//! 2. [`nn`] trains a stacked LSTM surrogate (plus an hour-wise FFN baseline)
//!    on the sampled episodes,
//! 3. [`calib`] estimates the physical building parameters from observed series
//!    with CMA-ES, keeping the surrogate weights frozen,
//! 4. [`moo`] searches HVAC schedules with NSGA-II for consumption/comfort
//!    compromises and reports the Pareto front.
//!
//! [`domain`] holds the shared data types (building description, schedules,
//! weather, episodes) and the feature expansion / normalization used by every
//! stage. [`metrics`] collects the evaluation formulas.

pub mod calib;
pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod moo;
pub mod predict;
pub mod nn;
pub mod refsim;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
