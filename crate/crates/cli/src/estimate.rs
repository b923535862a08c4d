use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use subsidy_core::estimators::{
    dml_plr_fit, pols_fit, pure_program_rows, twfe_fit, DmlSpec, NuisanceLearner, TreatmentMode, TwfeSpec, CONTRAST,
    TAU_12, TAU_12C,
};
use subsidy_core::panel::{is_known_column, Outcome, PanelRow, CATEGORICAL_COLUMNS};
use subsidy_core::stats::{EstimateResult, ForestParams};

use crate::error::{CliError, Result};
use crate::panel_csv::fmt_float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pols")]
    Pols,
    #[serde(rename = "twfe-cont")]
    TwfeContinuous,
    #[serde(rename = "twfe-bin")]
    TwfeBinary,
    #[serde(rename = "dml")]
    Dml,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pols, Method::TwfeContinuous, Method::TwfeBinary, Method::Dml];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pols => "pols",
            Method::TwfeContinuous => "twfe-cont",
            Method::TwfeBinary => "twfe-bin",
            Method::Dml => "dml",
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method {s:?}; expected pols, twfe-cont, twfe-bin or dml")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub method: Method,
    pub outcomes: Vec<Outcome>,
    pub k_folds: usize,
    pub seed: u64,
    pub trees: usize,
    /// TWFE numeric covariates; `None` keeps the default set.
    pub covariates: Option<Vec<String>>,
    /// TWFE categorical dummy sets; `None` keeps the default set.
    pub fixed_effects: Option<Vec<String>>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        let dml = DmlSpec::default();
        EstimateOptions {
            method: Method::TwfeContinuous,
            outcomes: Outcome::ALL.to_vec(),
            k_folds: dml.k_folds,
            seed: dml.seed,
            trees: ForestParams::default().n_trees,
            covariates: None,
            fixed_effects: None,
        }
    }
}

impl EstimateOptions {
    /// Column names must exist before any method-specific checks.
    pub fn check(&self) -> Result<()> {
        for c in self.covariates.iter().flatten() {
            if !is_known_column(c) || CATEGORICAL_COLUMNS.contains(&c.as_str()) {
                return Err(CliError::schema(None, Some(c), format!("unknown numeric column {c}")));
            }
        }
        for c in self.fixed_effects.iter().flatten() {
            if !CATEGORICAL_COLUMNS.contains(&c.as_str()) {
                return Err(CliError::schema(None, Some(c), format!("unknown categorical column {c}")));
            }
        }
        let custom = self.covariates.is_some() || self.fixed_effects.is_some();
        if custom && matches!(self.method, Method::Pols | Method::Dml) {
            return Err(CliError::Usage(format!(
                "--covariates and --fixed-effects apply to TWFE only; {} uses a fixed control set",
                self.method.name()
            )));
        }
        if self.outcomes.is_empty() {
            return Err(CliError::Usage("no outcome selected".into()));
        }
        Ok(())
    }

    pub fn twfe_spec(&self, outcome: Outcome) -> TwfeSpec {
        let mode = match self.method {
            Method::TwfeBinary => TreatmentMode::Binary,
            _ => TreatmentMode::ContinuousShares,
        };
        let mut spec = TwfeSpec::default().with_outcome(outcome).with_mode(mode);
        if let Some(c) = &self.covariates {
            spec.covariates = c.clone();
        }
        if let Some(f) = &self.fixed_effects {
            spec.fixed_effects = f.clone();
        }
        spec
    }

    pub fn dml_spec(&self) -> DmlSpec {
        DmlSpec {
            k_folds: self.k_folds,
            learner: NuisanceLearner::Forest(ForestParams { n_trees: self.trees, ..ForestParams::default() }),
            seed: self.seed,
        }
    }
}

/// One reported term: a coefficient or the contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub outcome: Outcome,
    pub terms: Vec<Term>,
    pub n: usize,
    pub r_squared: Option<f64>,
    /// HCPs dropped by the binary treatment definition.
    pub n_dropped_mixed: Option<usize>,
    pub full: EstimateResult,
}

impl EstimateRecord {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.term == name)
    }
}

fn terms(est: &EstimateResult, coefs: &[&str], contrast: &str) -> Vec<Term> {
    let mut out: Vec<Term> = coefs
        .iter()
        .filter_map(|name| {
            let i = est.index(name)?;
            Some(Term {
                term: name.to_string(),
                estimate: est.coefficients[i],
                se: est.se[i],
                p_value: est.p_values[i],
                ci_lower: est.ci_lower[i],
                ci_upper: est.ci_upper[i],
            })
        })
        .collect();
    if let Some(c) = est.contrast(contrast) {
        out.push(Term {
            term: c.label.clone(),
            estimate: c.estimate,
            se: c.se,
            p_value: c.p_value,
            ci_lower: c.ci_lower,
            ci_upper: c.ci_upper,
        });
    }
    out
}

pub fn estimate(panel: &[PanelRow], opts: &EstimateOptions) -> Result<Vec<EstimateRecord>> {
    opts.check()?;
    let program_rows = (opts.method == Method::Pols).then(|| pure_program_rows(panel));
    let mut records = Vec::with_capacity(opts.outcomes.len());
    for &outcome in &opts.outcomes {
        let record = match opts.method {
            Method::Pols => {
                let full = pols_fit(program_rows.as_deref().unwrap_or_default(), outcome)?.estimate;
                EstimateRecord {
                    method: opts.method,
                    outcome,
                    terms: terms(&full, &["P1", "P2", "P2c"], "P2c-P2"),
                    n: full.n,
                    r_squared: full.r_squared,
                    n_dropped_mixed: None,
                    full,
                }
            }
            Method::TwfeContinuous | Method::TwfeBinary => {
                let r = twfe_fit(panel, &opts.twfe_spec(outcome))?;
                EstimateRecord {
                    method: opts.method,
                    outcome,
                    terms: terms(&r.estimate, &[TAU_12, TAU_12C], CONTRAST),
                    n: r.estimate.n,
                    r_squared: r.estimate.r_squared,
                    n_dropped_mixed: (opts.method == Method::TwfeBinary).then_some(r.n_dropped_mixed),
                    full: r.estimate,
                }
            }
            Method::Dml => {
                let fit = dml_plr_fit(panel, outcome, &opts.dml_spec())?;
                EstimateRecord {
                    method: opts.method,
                    outcome,
                    terms: terms(&fit.estimate, &[TAU_12, TAU_12C], CONTRAST),
                    n: fit.estimate.n,
                    r_squared: None,
                    n_dropped_mixed: None,
                    full: fit.estimate,
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}

pub const TABLE_COLUMNS: [&str; 10] =
    ["method", "outcome", "term", "estimate", "se", "p_value", "ci_lower", "ci_upper", "n", "r_squared"];

/// Tab-separated, one line per term, full precision.
pub fn to_tsv(records: &[EstimateRecord]) -> String {
    let mut s = TABLE_COLUMNS.join("\t");
    s.push('\n');
    for r in records {
        for t in &r.terms {
            let r2 = r.r_squared.map(fmt_float).unwrap_or_default();
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.method.name(),
                r.outcome,
                t.term,
                fmt_float(t.estimate),
                fmt_float(t.se),
                fmt_float(t.p_value),
                fmt_float(t.ci_lower),
                fmt_float(t.ci_upper),
                r.n,
                r2
            );
        }
    }
    s
}

fn stars(p: f64) -> &'static str {
    match p {
        p if p < 0.01 => "***",
        p if p < 0.05 => "**",
        p if p < 0.1 => "*",
        _ => "",
    }
}

/// Readable table: one column per outcome, estimate over bracketed SE.
pub fn to_table(records: &[EstimateRecord]) -> String {
    let mut s = String::new();
    let Some(first) = records.first() else {
        return s;
    };
    let width = 16;
    let _ = write!(s, "{:<14}", first.method.name());
    for r in records {
        let _ = write!(s, "{:>width$}", r.outcome.to_string());
    }
    s.push('\n');
    for t in &first.terms {
        let _ = write!(s, "{:<14}", t.term);
        for r in records {
            let cell = r.term(&t.term).map(|x| format!("{:.4}{}", x.estimate, stars(x.p_value))).unwrap_or_default();
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
        let _ = write!(s, "{:<14}", "");
        for r in records {
            let cell = r.term(&t.term).map(|x| format!("({:.4})", x.se)).unwrap_or_default();
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<14}", "N");
    for r in records {
        let _ = write!(s, "{:>width$}", r.n);
    }
    s.push('\n');
    if records.iter().any(|r| r.r_squared.is_some()) {
        let _ = write!(s, "{:<14}", "R2");
        for r in records {
            let cell = r.r_squared.map(|v| format!("{v:.4}")).unwrap_or_default();
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, period: u8, y: f64, s2: f64, s2c: f64) -> PanelRow {
        PanelRow {
            hcp_id: id.into(),
            period,
            ln_price: y,
            ln_subsidy: y,
            ln_netcost: y,
            s2,
            s2c,
            ln_speed: 0.0,
            hcp_type: "t".into(),
            service_type: "s".into(),
            state: "X".into(),
            n_requests: 1,
            speed_mbps: 1.0,
            level_sums: None,
        }
    }

    /// Stayer 10 -> 11, P2 switcher 10 -> 9.5, P2c switcher 10 -> 12.
    fn three_hcp() -> Vec<PanelRow> {
        vec![
            row("a", 0, 10.0, 0.0, 0.0),
            row("a", 1, 11.0, 0.0, 0.0),
            row("b", 0, 10.0, 0.0, 0.0),
            row("b", 1, 9.5, 1.0, 0.0),
            row("c", 0, 10.0, 0.0, 0.0),
            row("c", 1, 12.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn twfe_table_reports_switching_effects() {
        let opts = EstimateOptions {
            outcomes: vec![Outcome::Price],
            covariates: Some(vec![]),
            fixed_effects: Some(vec![]),
            ..Default::default()
        };
        let recs = estimate(&three_hcp(), &opts).unwrap();
        let r = &recs[0];
        assert!((r.term(TAU_12).unwrap().estimate + 1.5).abs() < 1e-12);
        assert!((r.term(TAU_12C).unwrap().estimate - 1.0).abs() < 1e-12);
        assert!((r.term(CONTRAST).unwrap().estimate - 2.5).abs() < 1e-12);
        let tsv = to_tsv(&recs);
        assert_eq!(tsv.lines().count(), 4);
        let s2: f64 = tsv
            .lines()
            .find(|l| l.starts_with("twfe-cont\tln_price\tS2\t"))
            .unwrap()
            .split('\t')
            .nth(3)
            .unwrap()
            .parse()
            .unwrap();
        assert!((s2 + 1.5).abs() < 1e-12, "{tsv}");
        assert!(to_table(&recs).contains("-1.5000"));
    }

    #[test]
    fn unknown_covariate_is_a_schema_violation() {
        let opts = EstimateOptions { covariates: Some(vec!["bandwidth".into()]), ..Default::default() };
        let err = estimate(&three_hcp(), &opts).unwrap_err();
        assert!(matches!(err, CliError::SchemaViolation { .. }));
        assert_eq!(err.exit_code(), crate::error::EXIT_USAGE);
    }

    #[test]
    fn controls_are_fixed_for_dml() {
        let opts = EstimateOptions { method: Method::Dml, covariates: Some(vec![]), ..Default::default() };
        assert!(matches!(estimate(&three_hcp(), &opts).unwrap_err(), CliError::Usage(_)));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ols".parse::<Method>().is_err());
    }
}
