use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::sim::ConsortiumRow;
use crate::stats::{loess_fit, ols_fit, Covariance, DesignMatrix, LoessPoint, OlsOptions};

const MIN_ROWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumpOptions {
    pub span: f64,
    pub degree: usize,
    pub grid_points: usize,
    /// Curve evaluated between these quantiles of the residualized fraction.
    pub trim: f64,
}

impl Default for HumpOptions {
    fn default() -> Self {
        HumpOptions { span: 0.75, degree: 2, grid_points: 101, trim: 0.025 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumpVerdict {
    InvertedU,
    Monotone,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumpReport {
    pub n: usize,
    /// Residualized fraction and log price, re-centered at their means.
    pub fraction: Vec<f64>,
    pub ln_price: Vec<f64>,
    pub curve: Vec<LoessPoint>,
    pub argmax_fraction: f64,
    pub max_fit: f64,
    pub verdict: HumpVerdict,
    /// Residual-on-residual slope.
    pub fwl_slope: f64,
    /// Coefficient on the fraction in the joint regression.
    pub joint_slope: f64,
    /// Aliased control columns removed (first-listed kept).
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

impl HumpReport {
    pub fn fwl_gap(&self) -> f64 {
        (self.fwl_slope - self.joint_slope).abs()
    }
}

fn controls(rows: &[ConsortiumRow]) -> Vec<(String, Vec<f64>)> {
    let mut cols = vec![
        ("mean_bidders".to_string(), rows.iter().map(|r| r.mean_bidders).collect()),
        ("ln_mean_speed".to_string(), rows.iter().map(|r| r.ln_mean_speed).collect()),
        ("ln_total_speed".to_string(), rows.iter().map(|r| r.ln_total_speed).collect()),
    ];
    let years: BTreeSet<u16> = rows.iter().map(|r| r.year).collect();
    for y in years.into_iter().skip(1) {
        cols.push((format!("year={y}"), rows.iter().map(|r| f64::from(r.year == y)).collect()));
    }
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.consortium_id.as_str()).collect();
    for id in ids.into_iter().skip(1) {
        cols.push((format!("consortium={id}"), rows.iter().map(|r| f64::from(r.consortium_id == id)).collect()));
    }
    cols
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Frisch-Waugh-Lovell residualization of log price and the ineligible
/// fraction on the consortium controls, then a LOESS fit of one residual on
/// the other with a shape verdict.
///
/// `InvertedU` needs an interior maximum whose rise from the left minimum
/// and fall to the right minimum both exceed the band half-width at the
/// maximum. Otherwise the curve is `Monotone` when its end-to-end change
/// exceeds the larger endpoint half-width, and `Flat` if not. The curve is
/// evaluated between the `trim` and `1 - trim` quantiles of the fraction.
pub fn fwl_hump(rows: &[ConsortiumRow], opts: HumpOptions) -> Result<HumpReport, DiagnosticsError> {
    let n = rows.len();
    if n < MIN_ROWS {
        return Err(DiagnosticsError::InvalidInput(format!("hump analysis needs at least {MIN_ROWS} rows, got {n}")));
    }
    let y: Vec<f64> = rows.iter().map(|r| r.ln_price).collect();
    let f: Vec<f64> = rows.iter().map(|r| r.ineligible_fraction).collect();
    let opts_ols = OlsOptions { intercept: true, covariance: Covariance::Classical, drop_collinear: true, absorbed: 0 };

    let ctrl = DesignMatrix::from_columns(controls(rows))?;
    let fit_y = ols_fit(&ctrl, &y, opts_ols)?;
    let fit_f = ols_fit(&ctrl, &f, opts_ols)?;
    let dropped = fit_y.result.dropped.clone();
    let ry: Vec<f64> = fit_y.residuals.iter().copied().collect();
    let rf: Vec<f64> = fit_f.residuals.iter().copied().collect();
    let (my, mf) = (mean(&y), mean(&f));
    let price_adj: Vec<f64> = ry.iter().map(|v| v + my).collect();
    let frac_adj: Vec<f64> = rf.iter().map(|v| v + mf).collect();

    let srr: f64 = rf.iter().map(|v| v * v).sum();
    let scale: f64 = f.iter().map(|v| v * v).sum::<f64>().max(1.0);
    if srr <= 1e-20 * scale {
        return Ok(HumpReport {
            n,
            fraction: frac_adj,
            ln_price: price_adj,
            curve: Vec::new(),
            argmax_fraction: mf,
            max_fit: my,
            verdict: HumpVerdict::Flat,
            fwl_slope: f64::NAN,
            joint_slope: f64::NAN,
            dropped,
            warnings: vec!["ineligible fraction has no variation after residualization (degenerate regressor)".into()],
        });
    }
    let fwl_slope = rf.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>() / srr;

    let mut joint_cols = vec![("ineligible_fraction".to_string(), f.clone())];
    joint_cols.extend(controls(rows));
    let joint = ols_fit(&DesignMatrix::from_columns(joint_cols)?, &y, opts_ols)?;
    let joint_slope = joint.result.coef("ineligible_fraction").unwrap_or(f64::NAN);

    let lo = loess_fit(&frac_adj, &price_adj, opts.span, opts.degree)?;
    let mut sorted = frac_adj.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let (a, b) = (q(opts.trim), q(1.0 - opts.trim));
    let m = opts.grid_points.max(3);
    let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    let curve = lo.evaluate(&grid)?;
    let m = curve.len();
    let (imax, top) =
        curve
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.fit > acc.1 { (i, p.fit) } else { acc });
    let half = |p: &LoessPoint| p.hi - p.fit;
    let min_fit = |s: &[LoessPoint]| s.iter().map(|p| p.fit).fold(f64::INFINITY, f64::min);
    let hw = half(&curve[imax]);
    let verdict =
        if imax > 0 && imax + 1 < m && top - min_fit(&curve[..=imax]) > hw && top - min_fit(&curve[imax..]) > hw {
            HumpVerdict::InvertedU
        } else if (curve[m - 1].fit - curve[0].fit).abs() > half(&curve[0]).max(half(&curve[m - 1])) {
            HumpVerdict::Monotone
        } else {
            HumpVerdict::Flat
        };
    Ok(HumpReport {
        n,
        fraction: frac_adj,
        ln_price: price_adj,
        argmax_fraction: curve[imax].x,
        max_fit: top,
        curve,
        verdict,
        fwl_slope,
        joint_slope,
        dropped,
        warnings: Vec::new(),
    })
}
