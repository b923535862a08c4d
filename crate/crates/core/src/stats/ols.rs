use nalgebra::{DMatrix, DVector};

use super::{z_and_p, ContrastResult, DesignMatrix, EstimateResult, StatsError, Z_95};

/// Relative residual norm below which a column counts as aliased.
const ALIAS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariance {
    /// `s^2 (X'X)^-1`.
    Classical,
    /// HC1 heteroskedasticity-robust.
    Robust,
    /// Clustered on the design's cluster labels with the
    /// `G/(G-1) * (n-1)/(n-k)` correction.
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsOptions {
    /// Prepend a `const` column of ones.
    pub intercept: bool,
    pub covariance: Covariance,
    /// Drop aliased columns (first-listed kept) instead of failing.
    pub drop_collinear: bool,
    /// Parameters absorbed before fitting (e.g. by a within transform);
    /// they reduce the residual degrees of freedom for classical and HC1
    /// variances but not the cluster correction.
    pub absorbed: usize,
}

impl Default for OlsOptions {
    fn default() -> Self {
        OlsOptions { intercept: true, covariance: Covariance::Classical, drop_collinear: false, absorbed: 0 }
    }
}

/// A least-squares fit plus the pieces diagnostics need.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub result: EstimateResult,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    pub ssr: f64,
    /// `(X'X)^-1` on the retained columns.
    pub xtx_inv: DMatrix<f64>,
    /// Retained design (after intercept insertion and alias removal).
    pub x: DMatrix<f64>,
}

impl OlsFit {
    /// Diagonal of the hat matrix.
    pub fn leverage(&self) -> Vec<f64> {
        (0..self.x.nrows())
            .map(|i| {
                let row = self.x.row(i);
                (row * &self.xtx_inv * row.transpose())[(0, 0)]
            })
            .collect()
    }
}

/// Least squares through a QR factorization of the retained columns.
pub fn ols_fit(design: &DesignMatrix, y: &[f64], opts: OlsOptions) -> Result<OlsFit, StatsError> {
    let n = design.nrows();
    if y.len() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { what: "outcome" });
    }

    let (x_full, names_full) = if opts.intercept {
        let x = design.x.clone().insert_column(0, 1.0);
        let mut names = vec!["const".to_string()];
        names.extend(design.names.iter().cloned());
        (x, names)
    } else {
        (design.x.clone(), design.names.clone())
    };

    let kept = independent_columns(&x_full);
    let dropped: Vec<String> =
        (0..x_full.ncols()).filter(|j| !kept.contains(j)).map(|j| names_full[j].clone()).collect();
    if !dropped.is_empty() && !opts.drop_collinear {
        return Err(StatsError::RankDeficient { dropped });
    }
    let x = x_full.select_columns(&kept);
    let names: Vec<String> = kept.iter().map(|&j| names_full[j].clone()).collect();
    let k = x.ncols();
    // Exactly identified fits are allowed; they carry zero residual dof.
    if n < k + opts.absorbed {
        return Err(StatsError::TooFewObservations { n, needed: k + opts.absorbed });
    }

    let yv = DVector::from_column_slice(y);
    let (beta, xtx_inv) = if k == 0 {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let qr = x.clone().qr();
        let r = qr.r();
        let qty = qr.q().transpose() * &yv;
        let beta = r.solve_upper_triangular(&qty).ok_or(StatsError::RankDeficient { dropped: vec![] })?;
        let r_inv =
            r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or(StatsError::RankDeficient { dropped: vec![] })?;
        (beta, &r_inv * r_inv.transpose())
    };
    let fitted = &x * &beta;
    let residuals = &yv - &fitted;
    let ssr = residuals.norm_squared();
    // Zero when absorbed effects saturate the sample; classical and HC1
    // variances are then undefined (NaN) but the cluster variance is not.
    let dof = n - k - opts.absorbed;

    let (cov, n_clusters) = match opts.covariance {
        Covariance::Classical => (&xtx_inv * (ssr / dof as f64), None),
        Covariance::Robust => {
            let scores = scaled_rows(&x, &residuals);
            let meat = scores.transpose() * &scores;
            (&xtx_inv * meat * &xtx_inv * (n as f64 / dof as f64), None)
        }
        Covariance::Cluster => {
            let clusters = design.clusters.as_ref().ok_or(StatsError::SingleCluster)?;
            let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
            if g < 2 {
                return Err(StatsError::SingleCluster);
            }
            let mut sums = DMatrix::<f64>::zeros(g, k);
            for i in 0..n {
                let e = residuals[i];
                let c = clusters[i];
                for j in 0..k {
                    sums[(c, j)] += e * x[(i, j)];
                }
            }
            let meat = sums.transpose() * &sums;
            let factor = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - k) as f64);
            (&xtx_inv * meat * &xtx_inv * factor, Some(g))
        }
    };
    let cov = (&cov + cov.transpose()) * 0.5;

    let mut result = EstimateResult::from_parts(names, &beta, &cov, n, dof);
    result.dropped = dropped;
    result.clusters = n_clusters;
    let mean = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - mean) * (v - mean)).sum();
    result.r_squared = (sst > 0.0).then(|| 1.0 - ssr / sst);

    Ok(OlsFit { result, residuals, fitted, ssr, xtx_inv, x })
}

/// Greedy Gram-Schmidt pass keeping each column that is not (numerically) in
/// the span of the columns kept before it.
fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > ALIAS_TOLERANCE * norm0 {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    kept
}

fn scaled_rows(x: &DMatrix<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= e[i];
    }
    out
}

/// `w' beta` with variance `w' V w` and a two-sided normal p-value.
pub fn linear_contrast(result: &EstimateResult, weights: &[f64]) -> Result<ContrastResult, StatsError> {
    let k = result.coefficients.len();
    if weights.len() != k {
        return Err(StatsError::DimensionMismatch { expected: k, got: weights.len() });
    }
    let estimate: f64 = weights.iter().zip(&result.coefficients).map(|(w, b)| w * b).sum();
    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            var += weights[i] * result.covariance[i][j] * weights[j];
        }
    }
    let se = var.max(0.0).sqrt();
    let (z, p_value) = z_and_p(estimate, se);
    Ok(ContrastResult {
        label: String::new(),
        estimate,
        se,
        z,
        p_value,
        ci_lower: estimate - Z_95 * se,
        ci_upper: estimate + Z_95 * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, k: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let xb: f64 = (0..k).map(|j| x[(i, j)] * (j as f64 + 1.0)).sum();
                xb + rng.sample::<f64, _>(StandardNormal) * (1.0 + x[(i, 0)].abs())
            })
            .collect();
        let names = (0..k).map(|j| format!("x{j}")).collect();
        (DesignMatrix::new(x, names).unwrap(), y)
    }

    #[test]
    fn perfect_fit_has_zero_se() {
        let d = DesignMatrix::from_columns(vec![("x".into(), vec![1.0, 2.0, 3.0, 4.0])]).unwrap();
        let fit = ols_fit(&d, &[2.0, 4.0, 6.0, 8.0], OlsOptions { intercept: false, ..Default::default() }).unwrap();
        assert!((fit.result.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(fit.result.se[0] < 1e-7);
    }

    #[test]
    fn matches_pseudo_inverse() {
        let (d, y) = random_design(200, 4, 11);
        let fit = ols_fit(&d, &y, OlsOptions { intercept: false, ..Default::default() }).unwrap();
        let pinv = d.x.clone().pseudo_inverse(1e-12).unwrap();
        let beta = pinv * DVector::from_vec(y.clone());
        for j in 0..4 {
            assert!((fit.result.coefficients[j] - beta[j]).abs() < 1e-10);
        }
        let xe = d.x.transpose() * &fit.residuals;
        assert!(xe.amax() < 1e-8 * y.iter().map(|v| v.abs()).fold(0.0, f64::max) * 200.0);
    }

    #[test]
    fn singleton_clusters_equal_hc1() {
        let (d, y) = random_design(120, 3, 5);
        let ids: Vec<usize> = (0..120).collect();
        let dc = d.clone().with_clusters(&ids).unwrap();
        let hc = ols_fit(&d, &y, OlsOptions { covariance: Covariance::Robust, ..Default::default() }).unwrap();
        let cl = ols_fit(&dc, &y, OlsOptions { covariance: Covariance::Cluster, ..Default::default() }).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((hc.result.covariance[i][j] - cl.result.covariance[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aliased_columns_reported_or_dropped() {
        let a = vec![1.0, 2.0, 3.0, 5.0, 8.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let d = DesignMatrix::from_columns(vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let y = [1.0, 0.0, 2.0, 1.0, 3.0];
        match ols_fit(&d, &y, OlsOptions::default()) {
            Err(StatsError::RankDeficient { dropped }) => assert_eq!(dropped, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
        let fit = ols_fit(&d, &y, OlsOptions { drop_collinear: true, ..Default::default() }).unwrap();
        assert_eq!(fit.result.names, vec!["const", "a"]);
    }

    #[test]
    fn single_cluster_rejected() {
        let (d, y) = random_design(20, 2, 1);
        let d = d.with_clusters(&[0u8; 20]).unwrap();
        let err = ols_fit(&d, &y, OlsOptions { covariance: Covariance::Cluster, ..Default::default() });
        assert_eq!(err.unwrap_err(), StatsError::SingleCluster);
    }

    #[test]
    fn unit_contrast_reproduces_coefficient() {
        let (d, y) = random_design(80, 3, 2);
        let fit = ols_fit(&d, &y, OlsOptions::default()).unwrap();
        let c = linear_contrast(&fit.result, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c.estimate, fit.result.coefficients[2]);
        assert!((c.se - fit.result.se[2]).abs() < 1e-15);
        assert!(linear_contrast(&fit.result, &[1.0]).is_err());
    }

    #[test]
    fn exchangeable_columns_give_zero_contrast() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut c1, mut c2, mut y) = (vec![], vec![], vec![]);
        for _ in 0..50 {
            let (u, v, e): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            for (p, q) in [(u, v), (v, u)] {
                c1.push(p);
                c2.push(q);
                y.push(u + v + e);
            }
        }
        let d = DesignMatrix::from_columns(vec![("x2".into(), c1), ("x3".into(), c2)]).unwrap();
        let fit = ols_fit(&d, &y, OlsOptions::default()).unwrap();
        let c = linear_contrast(&fit.result, &[0.0, -1.0, 1.0]).unwrap();
        assert!(c.estimate.abs() < 1e-10);
    }

    #[test]
    fn robust_contrast_se_close_to_bootstrap() {
        let (d, y) = random_design(500, 2, 9);
        let opts = OlsOptions { covariance: Covariance::Robust, ..Default::default() };
        let fit = ols_fit(&d, &y, opts).unwrap();
        let w = [0.0, 1.0, -1.0];
        let se = linear_contrast(&fit.result, &w).unwrap().se;

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let reps = 1000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                let idx: Vec<usize> = (0..500).map(|_| rng.random_range(0..500)).collect();
                let x = DMatrix::from_fn(500, 2, |i, j| d.x[(idx[i], j)]);
                let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                let db = DesignMatrix::new(x, d.names.clone()).unwrap();
                let f = ols_fit(&db, &yb, OlsOptions::default()).unwrap();
                f.result.coefficients[1] - f.result.coefficients[2]
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((se / sd - 1.0).abs() < 0.1, "analytic {se} bootstrap {sd}");
    }
}
