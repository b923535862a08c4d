use nalgebra::{DMatrix, DVector};

use super::{DesignMatrix, EstimateResult, StatsError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitOptions {
    pub intercept: bool,
    pub max_iter: usize,
    /// Convergence threshold on the sup-norm of the score.
    pub gradient_tol: f64,
    /// Coefficient magnitude treated as divergence.
    pub separation_bound: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        LogitOptions { intercept: true, max_iter: 100, gradient_tol: 1e-8, separation_bound: 30.0 }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Newton-Raphson maximum likelihood for `Pr(y = 1) = Lambda(x'beta)`.
///
/// The covariance is the inverse observed information; McFadden's
/// pseudo-R² is stored in `pseudo_r_squared`.
pub fn logit_fit(design: &DesignMatrix, y: &[f64], opts: LogitOptions) -> Result<EstimateResult, StatsError> {
    let n = design.nrows();
    if y.len() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: y.len() });
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(StatsError::InvalidArgument { name: "y", reason: "outcome must be 0 or 1".into() });
    }
    let ones = y.iter().filter(|v| **v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(StatsError::NoVariation);
    }
    let (x, names) = if opts.intercept {
        let mut names = vec!["const".to_string()];
        names.extend(design.names.iter().cloned());
        (design.x.clone().insert_column(0, 1.0), names)
    } else {
        (design.x.clone(), design.names.clone())
    };
    let k = x.ncols();
    if n <= k {
        return Err(StatsError::TooFewObservations { n, needed: k + 1 });
    }
    let yv = DVector::from_column_slice(y);

    let mut beta = DVector::<f64>::zeros(k);
    let mut ll = loglik(&x, y, &beta);
    let mut grad_norm = f64::INFINITY;
    let mut info = DMatrix::<f64>::zeros(k, k);
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let eta = &x * &beta;
        let p = eta.map(sigmoid);
        let grad = x.transpose() * (&yv - &p);
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        info = x.transpose() * xw;
        grad_norm = grad.amax();
        if grad_norm < opts.gradient_tol {
            converged = true;
            break;
        }
        if let Some((j, _)) = beta.iter().enumerate().find(|(_, b)| b.abs() > opts.separation_bound) {
            return Err(StatsError::Separation { name: names[j].clone() });
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => info
                .clone()
                .lu()
                .solve(&grad)
                .ok_or_else(|| StatsError::Separation { name: names[grad.iamax()].clone() })?,
        };
        let mut t = 1.0;
        loop {
            let candidate = &beta + &step * t;
            let ll_new = loglik(&x, y, &candidate);
            if ll_new >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                beta = candidate;
                ll = ll_new;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        if let Some((j, _)) = beta.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
            if beta[j].abs() > opts.separation_bound * 0.5 {
                return Err(StatsError::Separation { name: names[j].clone() });
            }
        }
        return Err(StatsError::NoConvergence { iterations: opts.max_iter, gradient: grad_norm });
    }
    let cov = info.clone().try_inverse().ok_or_else(|| StatsError::Separation { name: names[0].clone() })?;
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut result = EstimateResult::from_parts(names, &beta, &cov, n, n - k);
    let ybar = ones as f64 / n as f64;
    let ll0 = n as f64 * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln());
    result.pseudo_r_squared = Some(1.0 - ll / ll0);
    Ok(result)
}

/// Score vector at `beta` (intercept handled by the caller's design).
#[cfg(test)]
fn score(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    let p = (x * b).map(sigmoid);
    x.transpose() * (DVector::from_column_slice(y) - p)
}
