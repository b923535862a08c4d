//! Numerical statistics used by the estimators and diagnostics: least
//! squares with clustered covariance, logit, LOESS, a bagged regression
//! forest and the Box-Cox profile likelihood.

mod boxcox;
mod forest;
mod loess;
mod logit;
mod ols;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

pub use boxcox::{boxcox_loglik, boxcox_profile, boxcox_transform, BoxCoxReport};
pub use forest::{forest_fit, forest_predict, ForestModel, ForestParams, Node};
pub use loess::{loess_fit, LoessFit, LoessPoint};
pub use logit::{logit_fit, LogitOptions};
pub use ols::{linear_contrast, ols_fit, Covariance, OlsFit, OlsOptions};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("design is rank deficient; aliased columns: {dropped:?}")]
    RankDeficient { dropped: Vec<String> },
    #[error("cluster-robust covariance needs at least two clusters")]
    SingleCluster,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too few observations: n={n}, need at least {needed}")]
    TooFewObservations { n: usize, needed: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("outcome has no variation")]
    NoVariation,
    #[error("quasi-complete separation: coefficient {name} diverges")]
    Separation { name: String },
    #[error("logit did not converge after {iterations} iterations (gradient {gradient:e})")]
    NoConvergence { iterations: usize, gradient: f64 },
    #[error("local design is singular at x={x}; increase the span")]
    SpanTooSmall { x: f64 },
    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("Box-Cox requires strictly positive outcomes (row {row})")]
    NonpositiveP { row: usize },
}

/// Regressor matrix with column names and optional cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    /// Dense cluster index per row.
    pub clusters: Option<Vec<usize>>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, names: Vec<String>) -> Result<Self, StatsError> {
        if names.len() != x.ncols() {
            return Err(StatsError::DimensionMismatch { expected: x.ncols(), got: names.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { what: "design matrix" });
        }
        Ok(DesignMatrix { x, names, clusters: None })
    }

    /// Builds from named columns of equal length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self, StatsError> {
        let n = columns.first().map_or(0, |c| c.1.len());
        for (_, col) in &columns {
            if col.len() != n {
                return Err(StatsError::DimensionMismatch { expected: n, got: col.len() });
            }
        }
        let k = columns.len();
        let x = DMatrix::from_fn(n, k, |i, j| columns[j].1[i]);
        Self::new(x, columns.into_iter().map(|c| c.0).collect())
    }

    /// Attaches cluster labels, re-indexed densely in order of appearance.
    pub fn with_clusters<T: std::hash::Hash + Eq + Clone>(mut self, labels: &[T]) -> Result<Self, StatsError> {
        if labels.len() != self.x.nrows() {
            return Err(StatsError::DimensionMismatch { expected: self.x.nrows(), got: labels.len() });
        }
        self.clusters = Some(dense_index(labels));
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}

/// Maps arbitrary labels to `0..G` in order of first appearance.
pub fn dense_index<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l.clone()).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Coefficients with their covariance and normal-approximation inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub z: Vec<f64>,
    pub p_values: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub n: usize,
    /// Residual degrees of freedom.
    pub dof: usize,
    pub r_squared: Option<f64>,
    pub within_r_squared: Option<f64>,
    pub pseudo_r_squared: Option<f64>,
    pub clusters: Option<usize>,
    /// Columns removed as collinear before fitting.
    pub dropped: Vec<String>,
    pub contrasts: Vec<ContrastResult>,
}

impl EstimateResult {
    /// Fills SEs, z, p and 95% intervals from a coefficient vector and covariance.
    pub fn from_parts(names: Vec<String>, beta: &DVector<f64>, cov: &DMatrix<f64>, n: usize, dof: usize) -> Self {
        let k = beta.len();
        let mut out = EstimateResult {
            names,
            coefficients: beta.iter().copied().collect(),
            covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
            se: Vec::with_capacity(k),
            z: Vec::with_capacity(k),
            p_values: Vec::with_capacity(k),
            ci_lower: Vec::with_capacity(k),
            ci_upper: Vec::with_capacity(k),
            n,
            dof,
            r_squared: None,
            within_r_squared: None,
            pseudo_r_squared: None,
            clusters: None,
            dropped: Vec::new(),
            contrasts: Vec::new(),
        };
        for i in 0..k {
            let se = cov[(i, i)].max(0.0).sqrt();
            let (z, p) = z_and_p(beta[i], se);
            out.se.push(se);
            out.z.push(z);
            out.p_values.push(p);
            out.ci_lower.push(beta[i] - Z_95 * se);
            out.ci_upper.push(beta[i] + Z_95 * se);
        }
        out
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.coefficients[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.se[i])
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let k = self.coefficients.len();
        DMatrix::from_fn(k, k, |i, j| self.covariance[i][j])
    }

    pub fn contrast(&self, label: &str) -> Option<&ContrastResult> {
        self.contrasts.iter().find(|c| c.label == label)
    }

    /// Adds `coef(plus) - coef(minus)` as a named contrast.
    pub fn push_difference(&mut self, label: &str, plus: &str, minus: &str) -> Result<(), StatsError> {
        let (Some(i), Some(j)) = (self.index(plus), self.index(minus)) else {
            return Ok(());
        };
        let mut w = vec![0.0; self.coefficients.len()];
        w[i] = 1.0;
        w[j] = -1.0;
        let mut c = linear_contrast(self, &w)?;
        c.label = label.to_string();
        self.contrasts.push(c);
        Ok(())
    }
}

/// z statistic and two-sided normal p-value; `se = 0` gives `p = 0` for a
/// nonzero estimate and `p = 1` for zero.
pub fn z_and_p(estimate: f64, se: f64) -> (f64, f64) {
    if se > 0.0 {
        let z = estimate / se;
        (z, normal_two_sided_p(z))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    }
}

pub fn normal_two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * n.cdf(-z.abs())
}

/// Upper tail of a chi-squared distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// Symmetrizes in place and reports the most negative eigenvalue.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
