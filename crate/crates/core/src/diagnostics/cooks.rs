use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{pct_change, DiagnosticsError};
use crate::estimators::{twfe_fit, twfe_within, TwfeResult, TwfeSpec};
use crate::panel::{Outcome, PanelRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientChange {
    pub outcome: Outcome,
    pub name: String,
    pub baseline: f64,
    pub trimmed: f64,
    pub pct_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooksReport {
    /// `4 / N` with `N` the estimation rows.
    pub threshold: f64,
    pub n_obs: usize,
    /// Cook's distance per panel row and outcome (NaN for rows not used).
    pub distances: Vec<[f64; 3]>,
    /// Union over outcomes of `D > threshold`, per panel row.
    pub flagged: Vec<bool>,
    pub dropped_hcps: Vec<String>,
    pub baseline: Vec<TwfeResult>,
    pub trimmed: Vec<TwfeResult>,
    pub changes: Vec<CoefficientChange>,
}

/// Cook's distances of the demeaned TWFE regression for each outcome; any
/// HCP with a flagged row is removed whole and all outcomes are refitted.
pub fn cooks_trim(panel: &[PanelRow], spec: &TwfeSpec) -> Result<CooksReport, DiagnosticsError> {
    let mut distances = vec![[f64::NAN; 3]; panel.len()];
    let mut baseline = Vec::with_capacity(3);
    let mut n_obs = 0;
    for outcome in Outcome::ALL {
        let (result, fit, kept) = twfe_within(panel, &spec.clone().with_outcome(outcome))?;
        let lev = fit.leverage();
        let n = fit.x.nrows();
        let k = fit.x.ncols();
        let s2 = fit.ssr / (n - k) as f64;
        for (pos, &row) in kept.iter().enumerate() {
            let (e, h) = (fit.residuals[pos], lev[pos]);
            // Leverage-one rows are fitted exactly: the distance is 0/0 and
            // left undefined, so it never flags.
            distances[row][outcome.index()] = if h > 1.0 - 1e-10 {
                f64::NAN
            } else if e == 0.0 {
                0.0
            } else if s2 == 0.0 {
                f64::INFINITY
            } else {
                e * e * h / (k as f64 * s2 * (1.0 - h).powi(2))
            };
        }
        n_obs = n;
        baseline.push(result);
    }
    let threshold = 4.0 / n_obs as f64;
    let flagged: Vec<bool> = distances.iter().map(|d| d.iter().any(|v| *v > threshold)).collect();
    let dropped: BTreeSet<&str> =
        panel.iter().zip(&flagged).filter(|(_, f)| **f).map(|(r, _)| r.hcp_id.as_str()).collect();
    let trimmed_panel: Vec<PanelRow> = panel.iter().filter(|r| !dropped.contains(r.hcp_id.as_str())).cloned().collect();
    let trimmed = Outcome::ALL
        .iter()
        .map(|&o| twfe_fit(&trimmed_panel, &spec.clone().with_outcome(o)))
        .collect::<Result<Vec<_>, _>>()?;
    let changes = compare(&baseline, &trimmed);
    Ok(CooksReport {
        threshold,
        n_obs,
        distances,
        flagged,
        dropped_hcps: dropped.into_iter().map(String::from).collect(),
        baseline,
        trimmed,
        changes,
    })
}

/// Percent change of every coefficient present in both fits.
pub(crate) fn compare(baseline: &[TwfeResult], refit: &[TwfeResult]) -> Vec<CoefficientChange> {
    let mut out = Vec::new();
    for (b, t) in baseline.iter().zip(refit) {
        for (name, &old) in b.estimate.names.iter().zip(&b.estimate.coefficients) {
            if let Some(new) = t.estimate.coef(name) {
                out.push(CoefficientChange {
                    outcome: b.outcome,
                    name: name.clone(),
                    baseline: old,
                    trimmed: new,
                    pct_change: pct_change(old, new),
                });
            }
        }
    }
    out
}
