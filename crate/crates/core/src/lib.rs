//! Smoothing sequential Monte Carlo with classifier-learned twists, and
//! reweighted-wake-sleep learning of state-space models and proposals.
//!
//! * [`ssm`]: model, proposal and twist traits, log-weights, seeded streams.
//! * [`smc`]: filtering and twisted SMC sweeps with alias resampling.
//! * [`twist`]: density-ratio twist training and the quadratic twist.
//! * [`grad`]: NAS-X, NASMC and SNIS gradient estimators, Adam, training.
//! * [`models`]: linear Gaussian, switching linear and Hodgkin-Huxley models.
//! * [`harness`]: JSON-configured experiments and bound sweeps.

pub mod error;
pub mod grad;
pub mod harness;
pub mod models;
pub mod smc;
pub mod ssm;
pub mod twist;

pub use error::{Error, Result};
