//! Credit portfolio loss simulation with correlated defaults and stochastic
//! loss given default.
//!
//! Defaults follow a structural factor model: each firm's standardized equity
//! return `G` is Gaussian with correlations induced by region/industry factors,
//! and the firm defaults when `G` falls below `Φ⁻¹(pd)`. Losses given default
//! are drawn from one of two beta-based models that couple LGD to the default
//! drivers:
//!
//! * [`lgd_a`]: beta shape driven by a Gaussian LGD factor `Z` jointly normal
//!   with the default factors.
//! * [`lgd_b`]: symmetric transformed-beta marginals coupled to the default
//!   severity percentile through a perturbed uniform.
//!
//! [`sim`] runs the Monte Carlo and computes expected loss, VaR quantiles and
//! expected tail losses.

mod csvio;
pub mod default_model;
pub mod error;
pub mod lgd_a;
pub mod lgd_b;
pub mod math;
pub mod portfolio;
pub mod sim;
pub mod synthetic;
pub mod valuation;

pub use error::{Error, Result};
