use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::cooks::compare;
use super::{CoefficientChange, DiagnosticsError};
use crate::estimators::{twfe_fit, TwfeResult, TwfeSpec};
use crate::panel::{balanced_pairs, Outcome, PanelRow, Program};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub anchor: Program,
    /// Pre-period speed range (Mbps) of the anchor program's HCPs.
    pub range: (f64, f64),
    pub dropped_hcps: Vec<String>,
    pub restricted: Vec<PanelRow>,
    pub baseline: Vec<TwfeResult>,
    pub refit: Vec<TwfeResult>,
    pub changes: Vec<CoefficientChange>,
}

/// Keeps HCPs whose pre-period speed lies in the range spanned by HCPs that
/// sit wholly on `anchor` in period 1, or in `range` when given, and refits.
pub fn common_support(
    panel: &[PanelRow],
    anchor: Program,
    spec: &TwfeSpec,
    range: Option<(f64, f64)>,
) -> Result<SupportReport, DiagnosticsError> {
    let pairs = balanced_pairs(panel).map_err(crate::estimators::EstimatorError::from)?;
    let range = match range {
        Some(r) => r,
        None => pairs
            .iter()
            .filter(|(_, b)| b.pure_program() == Some(anchor))
            .map(|(a, _)| a.speed_mbps)
            .fold(None, |acc: Option<(f64, f64)>, s| Some(acc.map_or((s, s), |(lo, hi)| (lo.min(s), hi.max(s)))))
            .ok_or(DiagnosticsError::EmptyAfterRestriction)?,
    };
    let outside: BTreeSet<&str> = pairs
        .iter()
        .filter(|(a, _)| a.speed_mbps < range.0 || a.speed_mbps > range.1)
        .map(|(a, _)| a.hcp_id.as_str())
        .collect();
    let restricted: Vec<PanelRow> = panel.iter().filter(|r| !outside.contains(r.hcp_id.as_str())).cloned().collect();
    if restricted.is_empty() {
        return Err(DiagnosticsError::EmptyAfterRestriction);
    }
    let fit_all = |p: &[PanelRow]| {
        Outcome::ALL.iter().map(|&o| twfe_fit(p, &spec.clone().with_outcome(o))).collect::<Result<Vec<_>, _>>()
    };
    let baseline = fit_all(panel)?;
    let refit = fit_all(&restricted)?;
    let changes = compare(&baseline, &refit);
    Ok(SupportReport {
        anchor,
        range,
        dropped_hcps: outside.into_iter().map(String::from).collect(),
        restricted,
        baseline,
        refit,
        changes,
    })
}
