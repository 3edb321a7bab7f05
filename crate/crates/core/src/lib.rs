//! Adiabatic persistent contrastive divergence (APCD) for pairwise binary
//! graphical models with hidden variables.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] and [`stats`]: the exponential family, configurations and
//!   statistics vectors.
//! * [`exact`]: enumeration oracles for partition functions, posteriors,
//!   marginal likelihoods and their gradients.
//! * [`sampler`]: free and clamped Gibbs sweeps and persistent chain pools.
//! * [`schedule`]: step-size families and the two-time-scale validator.
//! * [`trainer`]: the APCD E/M loop and its E-step estimator trait.
//! * [`baselines`]: mean-field PCD, the hybrid estimator and exact EM.
//! * [`registry`]: training algorithms registered and selected by name.
//! * [`eval`]: Parzen window scoring, AIS and stationarity diagnostics.
//! * [`synth`]: random grid models and synthetic datasets.
//! * [`formats`]: model, dataset, checkpoint, metrics and config files.

pub mod error;
pub mod eval;
pub mod registry;
pub mod synth;
pub mod baselines;
pub mod exact;
pub mod formats;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;
pub mod trainer;

pub use error::{ApcdError, Result};
pub use model::{Configuration, GraphTopology, PairwiseModel, VariablePartition};
pub use stats::StatsVector;
