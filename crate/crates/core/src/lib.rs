//! Subsidy mechanism equilibria, synthetic two-period provider panels, and
//! the estimation and robustness stack used to measure switching effects.

pub mod diagnostics;
pub mod estimators;
pub mod mechanism;
pub mod panel;
pub mod sim;
pub mod stats;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
