//! Simulation, likelihood-free fitting and forecasting of hospital census
//! counts with an explicit-duration patient-trajectory model.

pub mod abc;
pub mod dist;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod forecast;
pub mod interventions;
pub mod model;
pub mod priors;
pub mod rng;

pub use error::{AcedError, Result};
