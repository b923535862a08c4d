use serde::{Deserialize, Serialize};

use super::{chi2_sf, StatsError};
use crate::mechanism::optimize::golden_section_max;

const LAMBDA_LO: f64 = -2.0;
const LAMBDA_HI: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxReport {
    pub lambda_hat: f64,
    pub loglik_hat: f64,
    /// `2 (l(lambda_hat) - l(0))`, the log model.
    pub lr_log: f64,
    pub p_log: f64,
    /// `2 (l(lambda_hat) - l(1))`, the linear model.
    pub lr_linear: f64,
    pub p_linear: f64,
    pub n: usize,
}

/// `(P^lambda - 1) / lambda`, with the `ln P` limit at zero.
pub fn boxcox_transform(p: f64, lambda: f64) -> f64 {
    let lp = p.ln();
    if lambda.abs() < 1e-12 {
        lp
    } else {
        (lambda * lp).exp_m1() / lambda
    }
}

/// Profile log-likelihood of `P^(lambda)` regressed on `[1, ln S]`,
/// including the Jacobian `(lambda - 1) * sum ln P`.
pub fn boxcox_loglik(p: &[f64], s: &[f64], lambda: f64) -> f64 {
    let n = p.len() as f64;
    let x: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let z: Vec<f64> = p.iter().map(|v| boxcox_transform(*v, lambda)).collect();
    let mx = x.iter().sum::<f64>() / n;
    let mz = z.iter().sum::<f64>() / n;
    let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
    for (xi, zi) in x.iter().zip(&z) {
        let (dx, dz) = (xi - mx, zi - mz);
        sxx += dx * dx;
        sxz += dx * dz;
        szz += dz * dz;
    }
    let rss = if sxx > 0.0 { szz - sxz * sxz / sxx } else { szz };
    let jacobian: f64 = p.iter().map(|v| v.ln()).sum();
    -0.5 * n * (rss.max(f64::MIN_POSITIVE) / n).ln() + (lambda - 1.0) * jacobian
}

/// Maximizes the profile likelihood over `lambda in [-2, 2]` (grid scan
/// followed by golden section) and tests the log and linear models.
pub fn boxcox_profile(p: &[f64], s: &[f64]) -> Result<BoxCoxReport, StatsError> {
    if p.len() != s.len() {
        return Err(StatsError::DimensionMismatch { expected: p.len(), got: s.len() });
    }
    if p.len() < 3 {
        return Err(StatsError::TooFewObservations { n: p.len(), needed: 3 });
    }
    if let Some(row) = p.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(StatsError::NonpositiveP { row });
    }
    if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(StatsError::InvalidArgument { name: "S", reason: "regressor must be positive".into() });
    }
    let ll = |l: f64| boxcox_loglik(p, s, l);
    let steps = 80;
    let width = (LAMBDA_HI - LAMBDA_LO) / steps as f64;
    let best =
        (0..=steps).map(|i| LAMBDA_LO + width * i as f64).max_by(|a, b| ll(*a).total_cmp(&ll(*b))).unwrap_or(0.0);
    let lambda_hat = golden_section_max(ll, (best - width).max(LAMBDA_LO), (best + width).min(LAMBDA_HI), 1e-10);
    let loglik_hat = ll(lambda_hat);
    let lr_log = (2.0 * (loglik_hat - ll(0.0))).max(0.0);
    let lr_linear = (2.0 * (loglik_hat - ll(1.0))).max(0.0);
    Ok(BoxCoxReport {
        lambda_hat,
        loglik_hat,
        lr_log,
        p_log: chi2_sf(lr_log, 1.0),
        lr_linear,
        p_linear: chi2_sf(lr_linear, 1.0),
        n: p.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    #[test]
    fn continuous_at_zero() {
        let p = [1.5, 2.0, 7.0, 3.3, 0.4];
        let s = [1.0, 2.0, 9.0, 4.0, 0.5];
        let at0 = boxcox_loglik(&p, &s, 0.0);
        assert!((boxcox_loglik(&p, &s, 1e-6) - at0).abs() < 1e-4);
        assert!((boxcox_loglik(&p, &s, -1e-6) - at0).abs() < 1e-4);
        assert_eq!(boxcox_transform(5.0, 0.0), 5f64.ln());
        assert!((boxcox_transform(5.0, 1.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn separates_log_and_linear_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = Normal::new(0.0, 0.1).unwrap();
        let s: Vec<f64> = (0..1000).map(|_| (rng.random::<f64>() * 7.0).exp()).collect();
        let loglog: Vec<f64> = s.iter().map(|v| (2.0 + 0.5 * v.ln() + rng.sample(e)).exp()).collect();
        let r = boxcox_profile(&loglog, &s).unwrap();
        assert!(r.lambda_hat.abs() <= 0.1, "{r:?}");
        assert!(r.p_linear < 1e-3);
        let linlog: Vec<f64> = s.iter().map(|v| 2.0 + 0.5 * v.ln() + rng.sample(e)).collect();
        let r = boxcox_profile(&linlog, &s).unwrap();
        assert!((r.lambda_hat - 1.0).abs() <= 0.15, "{r:?}");
        assert!(r.p_log < 1e-3);
    }

    #[test]
    fn rejects_nonpositive() {
        assert_eq!(boxcox_profile(&[1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]), Err(StatsError::NonpositiveP { row: 1 }));
    }
}
