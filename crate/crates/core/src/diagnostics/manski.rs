use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::panel::{balanced_pairs, Outcome, PanelRow, Program};
use crate::stats::{ols_fit, Covariance, DesignMatrix, OlsOptions, Z_95};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub g: f64,
    pub beta: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub margin: Program,
    pub outcome: Outcome,
    /// DiD interaction coefficient.
    pub beta_did: f64,
    /// Control-group trend.
    pub beta0: f64,
    pub points: Vec<SensitivityPoint>,
    /// `g` at which the robust estimate is zero, if inside the grid.
    pub zero_crossing: Option<f64>,
    pub n_hcps: usize,
}

/// Proportional trend-violation sensitivity for one switching margin.
///
/// HCPs that moved onto the other margin are dropped, leaving the canonical
/// DiD `y = a + c G + l T + b G T` with `G` the HCP's period-1 share of
/// `margin`. Then `beta(g) = b + (1 - g) l`, with the delta-method variance
/// from the clustered covariance of `(b, l)`.
pub fn manski_sensitivity(
    panel: &[PanelRow],
    margin: Program,
    outcome: Outcome,
    g_grid: &[f64],
) -> Result<SensitivityCurve, DiagnosticsError> {
    let share = |r: &PanelRow| match margin {
        Program::P2 => Ok((r.s2, r.s2c)),
        Program::P2c => Ok((r.s2c, r.s2)),
        Program::P1 => Err(DiagnosticsError::InvalidInput("margin must be P2 or P2c".into())),
    };
    let pairs = balanced_pairs(panel).map_err(crate::estimators::EstimatorError::from)?;
    let mut kept = Vec::new();
    for (a, b) in pairs {
        let (own, other) = share(b)?;
        if other == 0.0 {
            kept.push((a, b, own));
        }
    }
    if !kept.iter().any(|k| k.2 == 0.0) {
        return Err(DiagnosticsError::NoControlGroup(format!("{margin:?}")));
    }
    if !kept.iter().any(|k| k.2 > 0.0) {
        return Err(crate::estimators::EstimatorError::NoSwitchers.into());
    }
    let mut g_col = Vec::new();
    let mut t_col = Vec::new();
    let mut gt_col = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for (a, b, own) in &kept {
        for (t, r) in [(0.0, a), (1.0, b)] {
            g_col.push(*own);
            t_col.push(t);
            gt_col.push(own * t);
            y.push(r.outcome(outcome));
            ids.push(r.hcp_id.as_str());
        }
    }
    let design = DesignMatrix::from_columns(vec![("G".into(), g_col), ("T".into(), t_col), ("GxT".into(), gt_col)])?
        .with_clusters(&ids)?;
    let opts = OlsOptions { intercept: true, covariance: Covariance::Cluster, drop_collinear: false, absorbed: 0 };
    let est = ols_fit(&design, &y, opts)?.result;
    let (ib, il) = (est.index("GxT").expect("fitted"), est.index("T").expect("fitted"));
    let beta_did = est.coefficients[ib];
    let beta0 = est.coefficients[il];
    let (vb, vl, cbl) = (est.covariance[ib][ib], est.covariance[il][il], est.covariance[ib][il]);

    let points = g_grid
        .iter()
        .map(|&g| {
            let w = 1.0 - g;
            let beta = beta_did + w * beta0;
            let se = (vb + w * w * vl + 2.0 * w * cbl).max(0.0).sqrt();
            SensitivityPoint { g, beta, se, ci_lower: beta - Z_95 * se, ci_upper: beta + Z_95 * se }
        })
        .collect();
    let (lo, hi) = g_grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &g| (l.min(g), h.max(g)));
    let zero_crossing = (beta0 != 0.0).then(|| 1.0 + beta_did / beta0).filter(|g| *g >= lo && *g <= hi);
    Ok(SensitivityCurve { margin, outcome, beta_did, beta0, points, zero_crossing, n_hcps: kept.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::fixtures::{row, three_hcp};

    fn panel() -> Vec<PanelRow> {
        let mut p = three_hcp();
        p.extend([row("d", 0, 9.0, 0.0, 0.0), row("d", 1, 10.2, 0.0, 0.0)]);
        p.extend([row("e", 0, 8.0, 0.0, 0.0), row("e", 1, 7.1, 1.0, 0.0)]);
        p
    }

    #[test]
    fn endpoints_and_slope() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let c = manski_sensitivity(&panel(), Program::P2, Outcome::Price, &grid).unwrap();
        let at = |g: f64| c.points.iter().find(|p| (p.g - g).abs() < 1e-12).unwrap().beta;
        assert_eq!(at(1.0), c.beta_did);
        assert!((at(0.0) - (c.beta_did + c.beta0)).abs() < 1e-12);
        for w in c.points.windows(2) {
            let slope = (w[1].beta - w[0].beta) / (w[1].g - w[0].g);
            assert!((slope + c.beta0).abs() < 1e-9);
        }
        // Stayers +1 and +1.2, switchers -0.5 and -0.9.
        assert!((c.beta0 - 1.1).abs() < 1e-12);
        assert!((c.beta_did + 1.8).abs() < 1e-12);
        assert_eq!(c.n_hcps, 4);
    }

    #[test]
    fn needs_controls() {
        let p: Vec<PanelRow> = panel().into_iter().filter(|r| r.hcp_id == "b" || r.hcp_id == "e").collect();
        assert!(matches!(
            manski_sensitivity(&p, Program::P2, Outcome::Price, &[1.0]),
            Err(DiagnosticsError::NoControlGroup(_))
        ));
    }
}
