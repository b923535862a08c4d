use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{StatsError, Z_95};

/// Fitted value with an approximate pointwise 95% band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoessPoint {
    pub x: f64,
    pub fit: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Local polynomial smoother with tricube weights over the nearest
/// `span * n` points.
#[derive(Debug, Clone)]
pub struct LoessFit {
    x: Vec<f64>,
    y: Vec<f64>,
    pub span: f64,
    pub degree: usize,
    /// Fitted values at the data points.
    pub fitted: Vec<f64>,
    /// Trace of the smoother matrix.
    pub trace: f64,
    /// Residual scale `sqrt(RSS / (n - trace))`.
    pub sigma: f64,
}

pub fn loess_fit(x: &[f64], y: &[f64], span: f64, degree: usize) -> Result<LoessFit, StatsError> {
    let n = x.len();
    if y.len() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 10 {
        return Err(StatsError::TooFewObservations { n, needed: 10 });
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(StatsError::InvalidArgument { name: "span", reason: format!("{span} not in (0, 1]") });
    }
    if degree > 2 {
        return Err(StatsError::InvalidArgument { name: "degree", reason: "degree must be 0, 1 or 2".into() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { what: "loess input" });
    }
    let mut fit = LoessFit { x: x.to_vec(), y: y.to_vec(), span, degree, fitted: vec![], trace: 0.0, sigma: 0.0 };
    let mut rss = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        let l = fit.weights_at(x[i])?;
        let f: f64 = l.iter().zip(y).map(|(a, b)| a * b).sum();
        trace += l[i];
        rss += (y[i] - f).powi(2);
        fit.fitted.push(f);
    }
    fit.trace = trace;
    let resid_dof = n as f64 - trace;
    fit.sigma = if resid_dof > 0.0 { (rss / resid_dof).sqrt() } else { 0.0 };
    Ok(fit)
}

impl LoessFit {
    /// Equivalent-kernel weights `l(x0)` so that `fit(x0) = l(x0)' y`.
    fn weights_at(&self, x0: f64) -> Result<Vec<f64>, StatsError> {
        let n = self.x.len();
        let q = ((self.span * n as f64).floor() as usize).clamp(self.degree + 2, n);
        let mut dist: Vec<f64> = self.x.iter().map(|xi| (xi - x0).abs()).collect();
        let mut sorted = dist.clone();
        let (_, kth, _) = sorted.select_nth_unstable_by(q - 1, f64::total_cmp);
        let dmax = *kth;
        if dmax <= 0.0 {
            return Err(StatsError::SpanTooSmall { x: x0 });
        }
        for d in dist.iter_mut() {
            let u = *d / dmax;
            *d = if u < 1.0 { (1.0 - u * u * u).powi(3) } else { 0.0 };
        }
        let w = dist;
        let p = self.degree + 1;
        let a = DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * (self.x[i] - x0).powi(j as i32));
        let qr = a.clone().qr();
        let r = qr.r();
        for j in 0..p {
            if r[(j, j)].abs() <= 1e-10 * a.column(j).norm().max(f64::MIN_POSITIVE) {
                return Err(StatsError::SpanTooSmall { x: x0 });
            }
        }
        let mut e1 = DVector::zeros(p);
        e1[0] = 1.0;
        let z = r.transpose().solve_lower_triangular(&e1).ok_or(StatsError::SpanTooSmall { x: x0 })?;
        let qz = qr.q() * z;
        Ok((0..n).map(|i| w[i].sqrt() * qz[i]).collect())
    }

    pub fn evaluate(&self, grid: &[f64]) -> Result<Vec<LoessPoint>, StatsError> {
        grid.iter()
            .map(|&x0| {
                let l = self.weights_at(x0)?;
                let fit: f64 = l.iter().zip(&self.y).map(|(a, b)| a * b).sum();
                let se = self.sigma * l.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok(LoessPoint { x: x0, fit, se, lo: fit - Z_95 * se, hi: fit + Z_95 * se })
            })
            .collect()
    }

    /// `m` evenly spaced points spanning the observed `x` range.
    pub fn grid(&self, m: usize) -> Vec<f64> {
        let lo = self.x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m < 2 {
            return vec![lo];
        }
        (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
    }
}
