use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::estimators::{twfe_fit, TwfeSpec};
use crate::panel::PanelRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsterInputs {
    /// Short-regression coefficient.
    pub beta_tilde: f64,
    /// Long-regression coefficient.
    pub beta_hat: f64,
    pub r2_tilde: f64,
    pub r2_hat: f64,
    /// Defaults to `min(1.3 R², 1)`.
    pub r2_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OsterVerdict {
    /// The coefficient does not move, or `R²max = R²`.
    Stable,
    /// `|delta| >= 1`.
    Robust,
    Fragile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsterReport {
    pub beta_tilde: f64,
    pub beta_hat: f64,
    pub r2_tilde: f64,
    pub r2_hat: f64,
    pub r2_max: f64,
    /// Infinite when stable.
    pub delta: f64,
    /// Bias-adjusted coefficient at `delta = 1`.
    pub beta_star: f64,
    pub verdict: OsterVerdict,
}

/// Proportional-selection `delta` and `beta*(1)` from short and long fits.
pub fn oster_from_inputs(inputs: OsterInputs) -> Result<OsterReport, DiagnosticsError> {
    let OsterInputs { beta_tilde, beta_hat, r2_tilde, r2_hat, r2_max } = inputs;
    let r2_max = r2_max.unwrap_or((1.3 * r2_hat).min(1.0));
    if ![beta_tilde, beta_hat, r2_tilde, r2_hat, r2_max].iter().all(|v| v.is_finite()) {
        return Err(DiagnosticsError::InvalidInput("non-finite Oster input".into()));
    }
    if r2_tilde > r2_hat {
        return Err(DiagnosticsError::InvalidInput(format!("short R² {r2_tilde} exceeds long R² {r2_hat}")));
    }
    if r2_max < r2_hat || r2_max > 1.0 {
        return Err(DiagnosticsError::InvalidInput(format!("R²max {r2_max} outside [R², 1]")));
    }
    let movement = beta_tilde - beta_hat;
    let report = |delta, beta_star, verdict| OsterReport {
        beta_tilde,
        beta_hat,
        r2_tilde,
        r2_hat,
        r2_max,
        delta,
        beta_star,
        verdict,
    };
    if movement == 0.0 || r2_max == r2_hat {
        return Ok(report(f64::INFINITY, beta_hat, OsterVerdict::Stable));
    }
    if r2_hat == r2_tilde {
        return Err(DiagnosticsError::DegenerateDenominator);
    }
    let delta = beta_hat * (r2_hat - r2_tilde) / (movement * (r2_max - r2_hat));
    let beta_star = beta_hat - movement * (r2_max - r2_hat) / (r2_hat - r2_tilde);
    let verdict = if delta.abs() >= 1.0 { OsterVerdict::Robust } else { OsterVerdict::Fragile };
    Ok(report(delta, beta_star, verdict))
}

/// Oster bounds for `coefficient` from two TWFE fits, using within R².
pub fn oster_bounds(
    panel: &[PanelRow],
    spec_short: &TwfeSpec,
    spec_long: &TwfeSpec,
    coefficient: &str,
    r2_max: Option<f64>,
) -> Result<OsterReport, DiagnosticsError> {
    let long_has = |c: &String| spec_long.covariates.contains(c);
    if !spec_short.covariates.iter().all(long_has)
        || !spec_short.fixed_effects.iter().all(|c| spec_long.fixed_effects.contains(c))
    {
        return Err(DiagnosticsError::InvalidInput("short covariates must be a subset of long covariates".into()));
    }
    let short = twfe_fit(panel, spec_short)?.estimate;
    let long = twfe_fit(panel, spec_long)?.estimate;
    let missing = || DiagnosticsError::InvalidInput(format!("coefficient {coefficient} not estimated"));
    oster_from_inputs(OsterInputs {
        beta_tilde: short.coef(coefficient).ok_or_else(missing)?,
        beta_hat: long.coef(coefficient).ok_or_else(missing)?,
        r2_tilde: short.within_r_squared.unwrap_or(0.0),
        r2_hat: long.within_r_squared.unwrap_or(0.0),
        r2_max,
    })
}
