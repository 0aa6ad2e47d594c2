//! Energy-aware update scheduling for networks of correlated sensors.
//!
//! A network controller estimates the observed field at every sensor
//! location with a linear minimum mean square error (LMMSE) estimator over a
//! separable exponential covariance model, and learns each sensor's sleep
//! interval with deep Q-learning. The reward trades estimation accuracy
//! against balancing the remaining battery energy across sensors.
//!
//! Modules:
//!
//! - [`estimator`]: covariance model, LMMSE weights, estimation error and
//!   online parameter extraction.
//! - [`energy`]: lifetime model and battery bookkeeping.
//! - [`agent`]: state encoding, actions, rewards and Q-learning targets.
//! - [`network`]: the feedforward Q-network with backpropagation.
//! - [`sim`]: the discrete-time network simulator, the brute-force optimal
//!   interval oracle and lifetime reporting.
//! - [`data`]: dataset ingestion, gridding and synthetic field generation.
//! - [`cli`]: configuration files, experiment runner and output writers.

pub mod agent;
pub mod cli;
pub mod data;
pub mod energy;
pub mod error;
pub mod estimator;
pub mod network;
pub mod sim;

pub use error::{Error, Result};

/// Seconds per Julian year, used for every seconds-to-years conversion.
pub const JULIAN_YEAR_S: f64 = 3.15576e7;
