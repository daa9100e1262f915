//! Likelihood-free fitting: distance, tolerance schedule and chains.

pub mod chain;
pub mod distance;
pub mod schedule;

pub use chain::*;
pub use distance::*;
pub use schedule::*;
