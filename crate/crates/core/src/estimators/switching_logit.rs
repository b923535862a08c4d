use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::sim::SwitchingRecord;
use crate::stats::{logit_fit, DesignMatrix, EstimateResult, LogitOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitStep {
    pub covariates: Vec<String>,
    pub estimate: EstimateResult,
    pub pseudo_r_squared: f64,
    /// Gain over the previous step (the first step reports its own value).
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitPath {
    pub steps: Vec<LogitStep>,
}

impl LogitPath {
    /// Coefficient on `H` in each step.
    pub fn h_path(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.estimate.coef("H")).collect()
    }
}

/// Four nested logits of the period-1 switch on period-0 facility
/// covariates: `H`; `+ ln_speed`; `+ ln_price`; `+ ln_requests`.
pub fn switching_logit(records: &[SwitchingRecord]) -> Result<LogitPath, EstimatorError> {
    let all: [(&str, Vec<f64>); 4] = [
        ("H", records.iter().map(|r| f64::from(r.h)).collect()),
        ("ln_speed", records.iter().map(|r| r.ln_speed).collect()),
        ("ln_price", records.iter().map(|r| r.ln_price).collect()),
        ("ln_requests", records.iter().map(|r| r.ln_requests).collect()),
    ];
    let y: Vec<f64> = records.iter().map(|r| f64::from(r.switched)).collect();
    let mut steps: Vec<LogitStep> = Vec::with_capacity(4);
    for m in 1..=all.len() {
        let cols: Vec<(String, Vec<f64>)> = all[..m].iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        let design = DesignMatrix::from_columns(cols)?;
        let estimate = logit_fit(&design, &y, LogitOptions::default())?;
        let pseudo = estimate.pseudo_r_squared.unwrap_or(f64::NAN);
        let increment = steps.last().map_or(pseudo, |s| pseudo - s.pseudo_r_squared);
        steps.push(LogitStep {
            covariates: all[..m].iter().map(|(n, _)| n.to_string()).collect(),
            estimate,
            pseudo_r_squared: pseudo,
            increment,
        });
    }
    Ok(LogitPath { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::StatsError;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize, seed: u64, sign: f64) -> Vec<SwitchingRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let h = rng.random_bool(0.5);
                let u: f64 = rng.random_range(1e-12..1.0);
                let noise = (u / (1.0 - u)).ln();
                let eta = -0.5 + sign * 2.0 * f64::from(h) + noise;
                SwitchingRecord {
                    facility_id: i,
                    hcp_id: format!("H{i}"),
                    h,
                    switched: eta > 0.0,
                    ln_speed: rng.random_range(0.0..4.0),
                    ln_price: rng.random_range(3.0..6.0),
                    ln_requests: rng.random_range(0.0..2.0),
                }
            })
            .collect()
    }

    #[test]
    fn covariates_add_nothing_when_only_h_matters() {
        let path = switching_logit(&records(2000, 1, 1.0)).unwrap();
        assert_eq!(path.steps.len(), 4);
        let first = path.steps[0].pseudo_r_squared;
        for s in &path.steps[1..] {
            assert!((s.pseudo_r_squared - first).abs() < 0.01);
        }
    }

    #[test]
    fn h_sign_follows_dgp() {
        for seed in 0..50 {
            let sign = if seed % 2 == 0 { 1.0 } else { -1.0 };
            let path = switching_logit(&records(500, seed, sign)).unwrap();
            assert_eq!(path.h_path()[0].signum(), sign);
        }
    }

    #[test]
    fn no_switchers_is_no_variation() {
        let mut rs = records(50, 2, 1.0);
        rs.iter_mut().for_each(|r| r.switched = false);
        assert_eq!(switching_logit(&rs).unwrap_err(), EstimatorError::Stats(StatsError::NoVariation));
    }
}
