//! TOML run configuration.
//!
//! ```toml
//! seed = 20240601            # required
//!
//! [scenario]                 # panel simulator knobs, all optional
//! n_hcps = 970
//! outcome_noise = 0.15
//!
//! [hump]                     # optional; simulate also writes consortia.csv
//! n_consortia = 125
//! dgp = { Planted = { peak = 0.4, curvature = 1.0 } }
//!
//! [replicate]                # Monte Carlo sizes used by `replicate`
//! replications = 200
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use subsidy_core::sim::{HumpConfig, HumpDgp, ScenarioConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub hump: Option<HumpSection>,
    #[serde(default)]
    pub replicate: ReplicateSection,
}

/// Consortium-year simulator settings; the seed comes from the top level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumpSection {
    pub n_consortia: usize,
    pub years: u16,
    pub noise_sd: f64,
    pub dgp: HumpDgp,
}

impl Default for HumpSection {
    fn default() -> Self {
        let d = HumpConfig::default();
        HumpSection { n_consortia: d.n_consortia, years: d.years, noise_sd: d.noise_sd, dgp: d.dgp }
    }
}

impl HumpSection {
    pub fn to_config(self, seed: u64, replication: u64) -> HumpConfig {
        HumpConfig {
            seed,
            replication,
            n_consortia: self.n_consortia,
            years: self.years,
            noise_sd: self.noise_sd,
            dgp: self.dgp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateSection {
    /// Monte Carlo replications for the coverage scenario.
    pub replications: usize,
    /// Replications for the trend-violation scenario.
    pub violation_replications: usize,
    /// Injected trend-violation factor.
    pub violation_g: f64,
    /// Parameter draws for the dominance sweep.
    pub draws: usize,
    /// Forest size and folds for Monte Carlo DML fits.
    pub mc_trees: usize,
    pub mc_folds: usize,
    /// Sample size of each planted functional-form draw.
    pub form_n: usize,
}

impl Default for ReplicateSection {
    fn default() -> Self {
        ReplicateSection {
            replications: 200,
            violation_replications: 100,
            violation_g: 1.3,
            draws: 1000,
            mc_trees: 50,
            mc_folds: 5,
            form_n: 1000,
        }
    }
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            scenario: ScenarioConfig { seed, ..ScenarioConfig::default() },
            hump: None,
            replicate: ReplicateSection::default(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e| toml_error(text, &e))?;
        if let Some(toml::Value::Table(s)) = raw.get("scenario") {
            if s.contains_key("seed") {
                return Err(CliError::ConfigParse {
                    field: Some("scenario.seed".into()),
                    line: find_key_line(text, "seed"),
                    message: "the seed is set once, at the top level".into(),
                });
            }
        }
        let mut config: RunConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        config.scenario.seed = config.seed;
        config.check(text)?;
        Ok(config)
    }

    /// Replaces the seed everywhere it is used.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.scenario.seed = seed;
    }

    fn check(&self, text: &str) -> Result<()> {
        self.scenario.validate().map_err(|e| match CliError::from(e) {
            CliError::ConfigParse { field, message, .. } => {
                let line = field.as_deref().and_then(|f| find_key_line(text, f));
                CliError::ConfigParse { field, line, message }
            }
            other => other,
        })?;
        let r = &self.replicate;
        let positive = [
            ("replicate.replications", r.replications),
            ("replicate.violation_replications", r.violation_replications),
            ("replicate.draws", r.draws),
            ("replicate.mc_trees", r.mc_trees),
            ("replicate.form_n", r.form_n),
        ];
        for (field, v) in positive {
            if v == 0 {
                let key = field.rsplit('.').next().unwrap_or(field);
                return Err(CliError::ConfigParse {
                    field: Some(field.into()),
                    line: find_key_line(text, key),
                    message: "must be positive".into(),
                });
            }
        }
        if r.mc_folds < 2 {
            return Err(CliError::ConfigParse {
                field: Some("replicate.mc_folds".into()),
                line: find_key_line(text, "mc_folds"),
                message: "cross-fitting needs at least 2 folds".into(),
            });
        }
        Ok(())
    }

    /// Canonical TOML snapshot, parseable by [`RunConfig::parse`].
    pub fn to_toml(&self) -> Result<String> {
        let mut table = toml::Table::try_from(self).map_err(|e| CliError::Serialize(e.to_string()))?;
        if let Some(toml::Value::Table(s)) = table.get_mut("scenario") {
            s.remove("seed");
        }
        toml::to_string(&table).map_err(|e| CliError::Serialize(e.to_string()))
    }
}

fn toml_error(text: &str, e: &toml::de::Error) -> CliError {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let message = e.message().trim().to_string();
    let field = message.split('`').nth(1).map(String::from);
    CliError::ConfigParse { field, line, message }
}

/// 1-based line of the first `key = ...` assignment.
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = RunConfig::parse("[scenario]\nn_hcps = 3\n").unwrap_err();
        match err {
            CliError::ConfigParse { field, .. } => assert_eq!(field.as_deref(), Some("seed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_reach_the_scenario() {
        let c = RunConfig::parse("seed = 9\n[scenario]\nn_hcps = 3\noutcome_noise = 0.0\n").unwrap();
        assert_eq!(c.scenario.seed, 9);
        assert_eq!(c.scenario.n_hcps, 3);
        assert_eq!(c.scenario.outcome_noise, 0.0);
        assert!(c.hump.is_none());
    }

    #[test]
    fn unknown_field_reports_name_and_line() {
        let err = RunConfig::parse("seed = 1\n[scenario]\nn_hcps = 3\nbogus = 2\n").unwrap_err();
        match err {
            CliError::ConfigParse { field, line, .. } => {
                assert_eq!(field.as_deref(), Some("bogus"));
                assert_eq!(line, Some(4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_value_points_at_its_line() {
        let err = RunConfig::parse("seed = 1\n\n[scenario]\ntau = 1.5\n").unwrap_err();
        match err {
            CliError::ConfigParse { field, line, .. } => {
                assert_eq!(field.as_deref(), Some("tau"));
                assert_eq!(line, Some(4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scenario_seed_is_rejected() {
        assert!(RunConfig::parse("seed = 1\n[scenario]\nseed = 2\n").is_err());
    }

    #[test]
    fn hump_section_parses() {
        let c = RunConfig::parse("seed = 1\n[hump]\nn_consortia = 40\ndgp = { Linear = { slope = 0.5 } }\n").unwrap();
        let h = c.hump.unwrap();
        assert_eq!(h.n_consortia, 40);
        assert_eq!(h.dgp, HumpDgp::Linear { slope: 0.5 });
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = RunConfig::with_seed(5);
        assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
