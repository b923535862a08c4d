//! Robustness battery for the panel estimates and the consortium hump.

mod cooks;
mod forms;
mod hump;
mod manski;
mod oster;
mod support;

use thiserror::Error;

use crate::estimators::EstimatorError;
use crate::stats::StatsError;

pub use cooks::{cooks_trim, CoefficientChange, CooksReport};
pub use forms::{functional_form_comparison, FormFit, FunctionalForm};
pub use hump::{fwl_hump, HumpOptions, HumpReport, HumpVerdict};
pub use manski::{manski_sensitivity, SensitivityCurve, SensitivityPoint};
pub use oster::{oster_bounds, oster_from_inputs, OsterInputs, OsterReport, OsterVerdict};
pub use support::{common_support, SupportReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no control HCPs left after restricting to the {0} margin")]
    NoControlGroup(String),
    #[error("Oster bound undefined: short and long R² coincide while the coefficient moves")]
    DegenerateDenominator,
    #[error("no HCPs remain after the common-support restriction")]
    EmptyAfterRestriction,
    #[error("{what} must be positive (row {row})")]
    NonpositiveValues { what: &'static str, row: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// `100 * (new - old) / |old|`; NaN when the baseline is zero.
pub(crate) fn pct_change(old: f64, new: f64) -> f64 {
    if old == 0.0 {
        f64::NAN
    } else {
        100.0 * (new - old) / old.abs()
    }
}
