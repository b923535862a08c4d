use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::stats::{ols_fit, DesignMatrix, OlsOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalForm {
    QuadraticInS,
    LinLog,
    LinSqrt,
    LogQuadraticInLnS,
    LogLog,
    Linear,
    LogSqrt,
    LogLinear,
}

impl FunctionalForm {
    pub const ALL: [FunctionalForm; 8] = [
        FunctionalForm::QuadraticInS,
        FunctionalForm::LinLog,
        FunctionalForm::LinSqrt,
        FunctionalForm::LogQuadraticInLnS,
        FunctionalForm::LogLog,
        FunctionalForm::Linear,
        FunctionalForm::LogSqrt,
        FunctionalForm::LogLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionalForm::QuadraticInS => "quadratic-in-S",
            FunctionalForm::LinLog => "lin-log",
            FunctionalForm::LinSqrt => "lin-sqrt",
            FunctionalForm::LogQuadraticInLnS => "log-quadratic-in-lnS",
            FunctionalForm::LogLog => "log-log",
            FunctionalForm::Linear => "linear",
            FunctionalForm::LogSqrt => "log-sqrt",
            FunctionalForm::LogLinear => "log-linear",
        }
    }

    pub fn log_outcome(self) -> bool {
        matches!(
            self,
            FunctionalForm::LogQuadraticInLnS
                | FunctionalForm::LogLog
                | FunctionalForm::LogSqrt
                | FunctionalForm::LogLinear
        )
    }

    fn regressors(self, s: &[f64]) -> Vec<(String, Vec<f64>)> {
        let map = |name: &str, f: fn(f64) -> f64| (name.to_string(), s.iter().map(|&v| f(v)).collect());
        match self {
            FunctionalForm::QuadraticInS => vec![map("S", |v| v), map("S^2", |v| v * v)],
            FunctionalForm::LinLog | FunctionalForm::LogLog => vec![map("lnS", f64::ln)],
            FunctionalForm::LinSqrt | FunctionalForm::LogSqrt => vec![map("sqrtS", f64::sqrt)],
            FunctionalForm::LogQuadraticInLnS => vec![map("lnS", f64::ln), map("lnS^2", |v| v.ln().powi(2))],
            FunctionalForm::Linear | FunctionalForm::LogLinear => vec![map("S", |v| v)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormFit {
    pub form: FunctionalForm,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Price-scale R² (log models back-transformed by `exp`, no smearing).
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub rmse: f64,
    /// 1 = highest adjusted R².
    pub rank: usize,
}

/// Fits the eight price-speed specifications and ranks them by price-scale
/// adjusted R².
pub fn functional_form_comparison(price: &[f64], speed: &[f64]) -> Result<Vec<FormFit>, DiagnosticsError> {
    if price.len() != speed.len() {
        return Err(DiagnosticsError::InvalidInput("price and speed lengths differ".into()));
    }
    for (row, (p, s)) in price.iter().zip(speed).enumerate() {
        if !(*p > 0.0) {
            return Err(DiagnosticsError::NonpositiveValues { what: "price", row });
        }
        if !(*s > 0.0) {
            return Err(DiagnosticsError::NonpositiveValues { what: "speed", row });
        }
    }
    let n = price.len() as f64;
    let mean = price.iter().sum::<f64>() / n;
    let sst: f64 = price.iter().map(|p| (p - mean).powi(2)).sum();
    let ln_price: Vec<f64> = price.iter().map(|p| p.ln()).collect();

    let mut fits = FunctionalForm::ALL
        .iter()
        .map(|&form| {
            let cols = form.regressors(speed);
            let k = cols.len() as f64;
            let y = if form.log_outcome() { &ln_price } else { price };
            let fit = ols_fit(&DesignMatrix::from_columns(cols)?, y, OlsOptions::default())?;
            let ssr: f64 = price
                .iter()
                .zip(fit.fitted.iter())
                .map(|(p, f)| {
                    let pred = if form.log_outcome() { f.exp() } else { *f };
                    (p - pred).powi(2)
                })
                .sum();
            let r2 = 1.0 - ssr / sst;
            Ok(FormFit {
                form,
                names: fit.result.names.clone(),
                coefficients: fit.result.coefficients.clone(),
                r_squared: r2,
                adj_r_squared: 1.0 - (1.0 - r2) * (n - 1.0) / (n - k - 1.0),
                rmse: (ssr / n).sqrt(),
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    fits.sort_by(|a, b| b.adj_r_squared.total_cmp(&a.adj_r_squared));
    for (i, f) in fits.iter_mut().enumerate() {
        f.rank = i + 1;
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn speeds(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0.0f64..6.0).exp()).collect()
    }

    #[test]
    fn lin_log_dgp_ranks_lin_log_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = speeds(1000, &mut rng);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let p: Vec<f64> = s.iter().map(|v| 5.0 + 3.0 * v.ln() + noise.sample(&mut rng)).collect();
        let fits = functional_form_comparison(&p, &s).unwrap();
        assert_eq!(fits[0].form, FunctionalForm::LinLog);
    }

    #[test]
    fn log_log_dgp_prefers_log_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = speeds(1000, &mut rng);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let p: Vec<f64> = s.iter().map(|v| (1.0 + 0.4 * v.ln() + noise.sample(&mut rng)).exp()).collect();
        let fits = functional_form_comparison(&p, &s).unwrap();
        assert!(matches!(fits[0].form, FunctionalForm::LogLog | FunctionalForm::LogQuadraticInLnS));
        let r2 = |f: FunctionalForm| fits.iter().find(|x| x.form == f).unwrap().r_squared;
        assert!(r2(FunctionalForm::Linear) < r2(FunctionalForm::LogLog));
    }

    #[test]
    fn exact_linear_fit() {
        let s: Vec<f64> = (1..=50).map(f64::from).collect();
        let p: Vec<f64> = s.iter().map(|v| 2.0 + 0.5 * v).collect();
        let fits = functional_form_comparison(&p, &s).unwrap();
        let lin = fits.iter().find(|f| f.form == FunctionalForm::Linear).unwrap();
        assert!((lin.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert_eq!(
            functional_form_comparison(&[1.0, 0.0], &[1.0, 2.0]).unwrap_err(),
            DiagnosticsError::NonpositiveValues { what: "price", row: 1 }
        );
    }
}
