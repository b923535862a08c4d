use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::rng::{substream, Stream};
use super::SimError;
use crate::mechanism::{consortium_optimum, ConsortiumParams};

/// Consortium-year record for the hump analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsortiumRow {
    pub consortium_id: String,
    pub year: u16,
    /// Mean log price billed to eligible members.
    pub ln_price: f64,
    /// Ineligible share of consortium revenue, `R / (1 + R)`.
    pub ineligible_fraction: f64,
    /// May be zero.
    pub mean_bidders: f64,
    pub ln_mean_speed: f64,
    pub ln_total_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HumpDgp {
    /// `ln price = controls - curvature * (f - peak)^2 + noise`, `f` uniform
    /// on the unit interval (stratified across a consortium's years).
    Planted { peak: f64, curvature: f64 },
    /// `ln price = controls + ln kappa*(R)` with `R` log-uniform on
    /// `[r_lo, r_hi]` and the given `alpha * gamma * B`.
    Structural { alpha_gamma_b: f64, r_lo: f64, r_hi: f64 },
    /// `ln price = controls + slope * f + noise`.
    Linear { slope: f64 },
    /// Every row has the same fraction.
    ConstantFraction { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumpConfig {
    pub seed: u64,
    pub replication: u64,
    pub n_consortia: usize,
    pub years: u16,
    pub noise_sd: f64,
    pub dgp: HumpDgp,
}

impl Default for HumpConfig {
    fn default() -> Self {
        HumpConfig {
            seed: 7,
            replication: 0,
            n_consortia: 125,
            years: 4,
            noise_sd: 0.05,
            dgp: HumpDgp::Planted { peak: 0.4, curvature: 1.0 },
        }
    }
}

const FIRST_YEAR: u16 = 2016;

/// Draws consortium-year rows whose controls shift the price linearly and
/// are independent of the ineligible fraction.
pub fn simulate_consortium_rows(config: &HumpConfig) -> Result<Vec<ConsortiumRow>, SimError> {
    if !(config.noise_sd >= 0.0 && config.noise_sd.is_finite()) {
        return Err(SimError::InvalidConfig { field: "noise_sd", reason: "must be >= 0".into() });
    }
    if let HumpDgp::Structural { alpha_gamma_b, r_lo, r_hi } = config.dgp {
        if !(alpha_gamma_b > 0.0 && r_lo > 0.0 && r_hi >= r_lo) {
            return Err(SimError::InvalidConfig {
                field: "dgp",
                reason: "need alpha_gamma_b > 0, 0 < r_lo <= r_hi".into(),
            });
        }
    }
    let noise = Normal::new(0.0, config.noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let year_effect: Vec<f64> = (0..config.years).map(|y| 0.03 * f64::from(y)).collect();
    let mut rows = Vec::with_capacity(config.n_consortia * usize::from(config.years));
    for k in 0..config.n_consortia {
        let mut rng = substream(config.seed, config.replication, Stream::Consortium, k as u64);
        let fixed: f64 = Normal::new(0.0, 0.2).expect("sd").sample(&mut rng);
        let members = 2.0 + f64::from(Poisson::new(4.0).expect("mean").sample(&mut rng) as u32);
        // Stratified over years: each consortium covers the unit interval,
        // so consortium means of the position barely vary and the consortium
        // effects do not bend the residualized relation.
        let mut strata: Vec<usize> = (0..year_effect.len()).collect();
        strata.shuffle(&mut rng);
        for (y, ye) in year_effect.iter().enumerate() {
            let u = (strata[y] as f64 + rng.random::<f64>()) / year_effect.len() as f64;
            let mean_bidders = f64::from(Poisson::new(1.5).expect("mean").sample(&mut rng) as u32);
            let ln_mean_speed: f64 = Normal::new(2.5, 0.8).expect("sd").sample(&mut rng);
            let ln_total_speed = ln_mean_speed + members.ln();
            let controls = fixed + ye - 0.05 * mean_bidders - 0.2 * ln_mean_speed + 0.1 * ln_total_speed;
            let eps = if config.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let (f, signal) = match config.dgp {
                HumpDgp::Planted { peak, curvature } => (u, -curvature * (u - peak).powi(2) + eps),
                HumpDgp::Linear { slope } => (u, slope * u + eps),
                HumpDgp::ConstantFraction { fraction } => (fraction, eps),
                HumpDgp::Structural { alpha_gamma_b, r_lo, r_hi } => {
                    let r = (r_lo.ln() + u * (r_hi / r_lo).ln()).exp();
                    let params = ConsortiumParams::new(alpha_gamma_b, r, 1.0, 1.0)
                        .map_err(|source| SimError::Mechanism { facility: k, source })?;
                    (r / (1.0 + r), consortium_optimum(&params).kappa_star.ln() + eps)
                }
            };
            rows.push(ConsortiumRow {
                consortium_id: format!("C{k:04}"),
                year: FIRST_YEAR + y as u16,
                ln_price: 4.0 + controls + signal,
                ineligible_fraction: f,
                mean_bidders,
                ln_mean_speed,
                ln_total_speed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let c = HumpConfig::default();
        let a = simulate_consortium_rows(&c).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, simulate_consortium_rows(&c).unwrap());
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.ineligible_fraction) && r.mean_bidders >= 0.0));
    }

    #[test]
    fn structural_fraction_is_revenue_share() {
        let c =
            HumpConfig { dgp: HumpDgp::Structural { alpha_gamma_b: 1.0, r_lo: 0.1, r_hi: 10.0 }, ..Default::default() };
        let rows = simulate_consortium_rows(&c).unwrap();
        assert!(rows.iter().all(|r| r.ineligible_fraction > 0.09 && r.ineligible_fraction < 0.91));
    }
}
