use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EstimatorError, CONTRAST, TAU_12, TAU_12C, TREND};
use crate::panel::{balanced_pairs, is_known_column, Outcome, PanelError, PanelRow, CATEGORICAL_COLUMNS};
use crate::stats::{dense_index, ols_fit, Covariance, DesignMatrix, EstimateResult, OlsFit, OlsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentMode {
    /// Pure-program indicators; HCPs with a mixed year are dropped.
    Binary,
    /// Speed-weighted program shares.
    ContinuousShares,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwfeSpec {
    pub outcome: Outcome,
    pub mode: TreatmentMode,
    /// Numeric panel columns entered as regressors.
    pub covariates: Vec<String>,
    /// Categorical columns entered as dummy sets. Time-invariant sets are
    /// absorbed by the HCP effects and show up in `dropped`.
    pub fixed_effects: Vec<String>,
    /// `hcp_id` or a categorical column.
    pub cluster: String,
}

impl Default for TwfeSpec {
    fn default() -> Self {
        TwfeSpec {
            outcome: Outcome::Price,
            mode: TreatmentMode::ContinuousShares,
            covariates: vec!["ln_speed".into(), "ln_requests".into()],
            fixed_effects: vec!["state".into(), "hcp_type".into(), "service_type".into()],
            cluster: "hcp_id".into(),
        }
    }
}

impl TwfeSpec {
    pub fn with_outcome(mut self, outcome: Outcome) -> Self {
        self.outcome = outcome;
        self
    }

    pub fn with_mode(mut self, mode: TreatmentMode) -> Self {
        self.mode = mode;
        self
    }

    fn check(&self) -> Result<(), EstimatorError> {
        for c in &self.covariates {
            if !is_known_column(c) || CATEGORICAL_COLUMNS.contains(&c.as_str()) {
                return Err(PanelError::UnknownColumn(c.clone()).into());
            }
        }
        for c in &self.fixed_effects {
            if !CATEGORICAL_COLUMNS.contains(&c.as_str()) {
                return Err(PanelError::UnknownColumn(c.clone()).into());
            }
        }
        if self.cluster != "hcp_id" && !CATEGORICAL_COLUMNS.contains(&self.cluster.as_str()) {
            return Err(PanelError::UnknownColumn(self.cluster.clone()).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwfeResult {
    pub outcome: Outcome,
    pub mode: TreatmentMode,
    /// Coefficients `T` (common trend), `S2`, `S2c` and covariates, with the
    /// `S2c-S2` contrast. `r_squared` is the LSDV R², `within_r_squared`
    /// the R² of the demeaned regression.
    pub estimate: EstimateResult,
    pub n_hcps: usize,
    /// Rows removed because their HCP had a mixed-program year.
    pub n_dropped_mixed: usize,
}

impl TwfeResult {
    pub fn tau_12(&self) -> Option<f64> {
        self.estimate.coef(TAU_12)
    }

    pub fn tau_12c(&self) -> Option<f64> {
        self.estimate.coef(TAU_12C)
    }

    pub fn trend(&self) -> Option<f64> {
        self.estimate.coef(TREND)
    }
}

/// Indices of rows kept for the mode.
fn sample(panel: &[PanelRow], mode: TreatmentMode) -> Vec<usize> {
    match mode {
        TreatmentMode::ContinuousShares => (0..panel.len()).collect(),
        TreatmentMode::Binary => {
            let mixed: BTreeSet<&str> =
                panel.iter().filter(|r| r.pure_program().is_none()).map(|r| r.hcp_id.as_str()).collect();
            (0..panel.len()).filter(|&i| !mixed.contains(panel[i].hcp_id.as_str())).collect()
        }
    }
}

fn treatment(r: &PanelRow, mode: TreatmentMode) -> (f64, f64) {
    match mode {
        TreatmentMode::ContinuousShares => (r.s2, r.s2c),
        TreatmentMode::Binary => (f64::from(r.s2 == 1.0), f64::from(r.s2c == 1.0)),
    }
}

/// Regressor columns in level form: T, the present treatment margins,
/// covariates and dummy sets (first level omitted).
fn level_columns(rows: &[&PanelRow], spec: &TwfeSpec) -> Result<Vec<(String, Vec<f64>)>, EstimatorError> {
    let treat: Vec<(f64, f64)> = rows.iter().map(|r| treatment(r, spec.mode)).collect();
    let has_p2 = treat.iter().any(|t| t.0 != 0.0);
    let has_p2c = treat.iter().any(|t| t.1 != 0.0);
    if !has_p2 && !has_p2c {
        return Err(EstimatorError::NoSwitchers);
    }
    let mut cols = vec![(TREND.to_string(), rows.iter().map(|r| f64::from(r.period)).collect())];
    if has_p2 {
        cols.push((TAU_12.to_string(), treat.iter().map(|t| t.0).collect()));
    }
    if has_p2c {
        cols.push((TAU_12C.to_string(), treat.iter().map(|t| t.1).collect()));
    }
    for c in &spec.covariates {
        let v = rows
            .iter()
            .map(|r| r.numeric(c).ok_or_else(|| PanelError::UnknownColumn(c.clone())))
            .collect::<Result<Vec<f64>, _>>()?;
        cols.push((c.clone(), v));
    }
    for fe in &spec.fixed_effects {
        let levels: BTreeSet<&str> = rows.iter().filter_map(|r| r.category(fe)).collect();
        for level in levels.into_iter().skip(1) {
            let v = rows.iter().map(|r| f64::from(r.category(fe) == Some(level))).collect();
            cols.push((format!("{fe}={level}"), v));
        }
    }
    Ok(cols)
}

fn cluster_labels<'a>(rows: &[&'a PanelRow], spec: &TwfeSpec) -> Vec<&'a str> {
    rows.iter()
        .map(|r| if spec.cluster == "hcp_id" { r.hcp_id.as_str() } else { r.category(&spec.cluster).unwrap_or("") })
        .collect()
}

fn demean(v: &mut [f64], groups: &[usize], n_groups: usize) {
    let mut sum = vec![0.0; n_groups];
    let mut cnt = vec![0.0; n_groups];
    for (x, &g) in v.iter().zip(groups) {
        sum[g] += x;
        cnt[g] += 1.0;
    }
    for (x, &g) in v.iter_mut().zip(groups) {
        *x -= sum[g] / cnt[g];
    }
}

/// Two-way fixed effects via the HCP within transform; the period effect
/// enters as `T`. SEs are clustered on `spec.cluster`.
pub fn twfe_fit(panel: &[PanelRow], spec: &TwfeSpec) -> Result<TwfeResult, EstimatorError> {
    Ok(twfe_within(panel, spec)?.0)
}

/// `twfe_fit` plus the demeaned least-squares fit and the panel indices of
/// the rows it used.
pub(crate) fn twfe_within(
    panel: &[PanelRow],
    spec: &TwfeSpec,
) -> Result<(TwfeResult, OlsFit, Vec<usize>), EstimatorError> {
    spec.check()?;
    if panel.iter().any(|r| r.period == 0 && (r.s2 != 0.0 || r.s2c != 0.0)) {
        return Err(EstimatorError::InvalidSpec("pre-period shares must be zero".into()));
    }
    let kept = sample(panel, spec.mode);
    let n_dropped_mixed = panel.len() - kept.len();
    let rows: Vec<&PanelRow> = kept.iter().map(|&i| &panel[i]).collect();
    let hcps: Vec<&str> = rows.iter().map(|r| r.hcp_id.as_str()).collect();
    let groups = dense_index(&hcps);
    let n_groups = groups.iter().copied().max().map_or(0, |m| m + 1);

    let mut cols = level_columns(&rows, spec)?;
    for (_, v) in cols.iter_mut() {
        demean(v, &groups, n_groups);
    }
    let y_raw: Vec<f64> = rows.iter().map(|r| r.outcome(spec.outcome)).collect();
    let mut y = y_raw.clone();
    demean(&mut y, &groups, n_groups);

    let design = DesignMatrix::from_columns(cols)?.with_clusters(&cluster_labels(&rows, spec))?;
    let opts =
        OlsOptions { intercept: false, covariance: Covariance::Cluster, drop_collinear: true, absorbed: n_groups };
    let fit = ols_fit(&design, &y, opts)?;
    let mut estimate = fit.result.clone();

    let within_sst: f64 = y.iter().map(|v| v * v).sum();
    let mean = y_raw.iter().sum::<f64>() / y_raw.len() as f64;
    let total_sst: f64 = y_raw.iter().map(|v| (v - mean) * (v - mean)).sum();
    estimate.within_r_squared = (within_sst > 0.0).then(|| 1.0 - fit.ssr / within_sst);
    estimate.r_squared = (total_sst > 0.0).then(|| 1.0 - fit.ssr / total_sst);
    if estimate.index(TAU_12).is_some() && estimate.index(TAU_12C).is_some() {
        estimate.push_difference(CONTRAST, TAU_12C, TAU_12)?;
    }
    let result = TwfeResult { outcome: spec.outcome, mode: spec.mode, estimate, n_hcps: n_groups, n_dropped_mixed };
    Ok((result, fit, kept))
}

/// First-difference form: `Δy` on a constant (the trend), `ΔS` and
/// `Δcovariates`; one observation per HCP. Coefficients match `twfe_fit`
/// on a balanced panel.
pub fn twfe_first_difference(panel: &[PanelRow], spec: &TwfeSpec) -> Result<TwfeResult, EstimatorError> {
    spec.check()?;
    let kept = sample(panel, spec.mode);
    let n_dropped_mixed = panel.len() - kept.len();
    let owned: Vec<PanelRow> = kept.iter().map(|&i| panel[i].clone()).collect();
    let pairs = balanced_pairs(&owned).map_err(|e| match e {
        PanelError::Unbalanced(id) => EstimatorError::UnbalancedPanelForFD(id),
        other => other.into(),
    })?;
    // Stack (t0, t1) so level_columns sees every row, then difference.
    let stacked: Vec<&PanelRow> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let levels = level_columns(&stacked, spec)?;
    let diff = |v: &[f64]| -> Vec<f64> { v.chunks(2).map(|c| c[1] - c[0]).collect() };
    let cols: Vec<(String, Vec<f64>)> =
        levels.into_iter().filter(|(name, _)| name != TREND).map(|(name, v)| (name, diff(&v))).collect();
    let y_levels: Vec<f64> = stacked.iter().map(|r| r.outcome(spec.outcome)).collect();
    let dy = diff(&y_levels);

    let firsts: Vec<&PanelRow> = pairs.iter().map(|(a, _)| *a).collect();
    let design = DesignMatrix::from_columns(cols)?.with_clusters(&cluster_labels(&firsts, spec))?;
    let opts = OlsOptions { intercept: true, covariance: Covariance::Cluster, drop_collinear: true, absorbed: 0 };
    let mut estimate = ols_fit(&design, &dy, opts)?.result;
    for name in estimate.names.iter_mut() {
        if name == "const" {
            *name = TREND.to_string();
        }
    }
    if estimate.index(TAU_12).is_some() && estimate.index(TAU_12C).is_some() {
        estimate.push_difference(CONTRAST, TAU_12C, TAU_12)?;
    }
    Ok(TwfeResult { outcome: spec.outcome, mode: spec.mode, estimate, n_hcps: pairs.len(), n_dropped_mixed })
}
