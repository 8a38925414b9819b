//! Structural pricing engine for two interconnected electricity markets.
//!
//! Spot prices in each zone come from a multi-technology merit-order stack
//! with an exponential scarcity premium; the interconnector flow couples the
//! zones by minimizing the absolute price spread within the transfer bounds.
//! Fuel costs follow log Ornstein-Uhlenbeck processes and demands are
//! seasonal means plus Ornstein-Uhlenbeck deviations, so the terminal state
//! is jointly Gaussian and forwards, European calls and transmission-right
//! values reduce to tilted Gaussian rectangle probabilities summed over the
//! merit-order/marginality/regime partition. Every analytic pricer has a
//! Monte Carlo twin used as an oracle.

pub mod checks;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod gaussian;
pub mod mat;
pub mod model;
pub mod montecarlo;
pub mod norm;
pub mod pricing;
pub mod scenario;
pub mod scenarios;

pub use error::{Error, Result};
