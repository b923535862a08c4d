use serde::{Deserialize, Serialize};

use super::SimError;

/// Scenario knobs. Ranges are `[lo, hi]` for uniform draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Monte Carlo replication index; selects disjoint RNG streams.
    pub replication: u64,
    pub n_hcps: usize,
    /// Facilities per HCP are `1 + Poisson(mean - 1)`.
    pub facilities_per_hcp_mean: f64,
    pub demand_a: [f64; 2],
    pub demand_b: [f64; 2],
    pub cost_c: [f64; 2],
    /// Cap set `u * c` below the monopoly price, `u` uniform on this range.
    /// Values below 0.5 keep the critical rate inside (0, 1).
    pub cap_markdown: [f64; 2],
    /// `ln(p_u / pbar) ~ N(mean, sd)`.
    pub urban_log_mean: f64,
    pub urban_log_sd: f64,
    pub tau: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Penalty curvature applied to consortium cross-subsidization.
    pub consortium_gamma: f64,
    /// Consortium revenue ratio is `R* * exp(U(-spread, spread))`.
    pub r_log_spread: f64,
    /// Probability that a switcher joins a consortium.
    pub p2c_fraction: f64,
    /// Scale of the logistic noise on the switching index; 0 is deterministic.
    pub switch_noise: f64,
    /// Share of the billed price paid out of pocket in the switching rule.
    pub switch_share: f64,
    /// Switch when `p / p_u` exceeds `1 / switch_share` (otherwise when below).
    pub switch_when_above_threshold: bool,
    /// Log trend applied to stayers between periods.
    pub trend: f64,
    /// Switchers' counterfactual trend is `trend_violation * trend`.
    pub trend_violation: f64,
    /// Standard deviation of iid facility outcome noise (log points).
    pub outcome_noise: f64,
    pub hcp_effect_sd: f64,
    pub speed_log_mean: f64,
    pub speed_log_sd: f64,
    pub speed_drift_sd: f64,
    /// Coefficient of log speed in every log outcome.
    pub speed_effect: f64,
    pub requests_mean: f64,
    pub n_states: usize,
    pub n_hcp_types: usize,
    pub n_service_types: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 20_240_601,
            replication: 0,
            n_hcps: 970,
            facilities_per_hcp_mean: 2.0,
            demand_a: [95.0, 105.0],
            demand_b: [0.95, 1.05],
            cost_c: [18.0, 22.0],
            cap_markdown: [0.15, 0.40],
            urban_log_mean: 0.4,
            urban_log_sd: 0.3,
            tau: 0.65,
            alpha: 0.5,
            gamma: 0.5,
            consortium_gamma: 0.02,
            r_log_spread: 1.0,
            p2c_fraction: 0.35,
            switch_noise: 0.1,
            switch_share: 0.35,
            switch_when_above_threshold: true,
            trend: 0.1,
            trend_violation: 1.0,
            outcome_noise: 0.15,
            hcp_effect_sd: 0.3,
            speed_log_mean: 2.5,
            speed_log_sd: 1.0,
            speed_drift_sd: 0.05,
            speed_effect: -0.1,
            requests_mean: 3.0,
            n_states: 10,
            n_hcp_types: 4,
            n_service_types: 3,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig { field, reason: reason.into() }
}

fn range(field: &'static str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), SimError> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= lo && r[1] <= hi {
        Ok(())
    } else {
        Err(invalid(field, format!("{r:?} must be an ordered range within [{lo}, {hi}]")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.facilities_per_hcp_mean >= 1.0 && self.facilities_per_hcp_mean.is_finite()) {
            return Err(invalid("facilities_per_hcp_mean", "must be >= 1"));
        }
        range("demand_a", self.demand_a, f64::MIN_POSITIVE, f64::MAX)?;
        range("demand_b", self.demand_b, f64::MIN_POSITIVE, f64::MAX)?;
        range("cost_c", self.cost_c, 0.0, f64::MAX)?;
        range("cap_markdown", self.cap_markdown, 1e-9, 0.5 - 1e-9)?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid("tau", "must lie in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1]"));
        }
        for (field, v) in [("gamma", self.gamma), ("consortium_gamma", self.consortium_gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.p2c_fraction) {
            return Err(invalid("p2c_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.switch_share) || self.switch_share == 0.0 {
            return Err(invalid("switch_share", "must lie in (0, 1)"));
        }
        for (field, v) in [
            ("switch_noise", self.switch_noise),
            ("outcome_noise", self.outcome_noise),
            ("hcp_effect_sd", self.hcp_effect_sd),
            ("speed_log_sd", self.speed_log_sd),
            ("speed_drift_sd", self.speed_drift_sd),
            ("urban_log_sd", self.urban_log_sd),
            ("r_log_spread", self.r_log_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be finite and >= 0"));
            }
        }
        for (field, v) in [
            ("trend", self.trend),
            ("trend_violation", self.trend_violation),
            ("speed_effect", self.speed_effect),
            ("speed_log_mean", self.speed_log_mean),
            ("urban_log_mean", self.urban_log_mean),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if !(self.requests_mean >= 0.0 && self.requests_mean.is_finite()) {
            return Err(invalid("requests_mean", "must be >= 0"));
        }
        if self.n_states == 0 || self.n_hcp_types == 0 || self.n_service_types == 0 {
            return Err(invalid("n_states", "category counts must be >= 1"));
        }
        Ok(())
    }

    /// Price ratio above (or below) which the switching index is positive.
    pub fn ratio_threshold(&self) -> f64 {
        1.0 / self.switch_share
    }
}
