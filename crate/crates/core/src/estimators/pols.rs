use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::panel::{Outcome, PanelRow, Program};
use crate::stats::{ols_fit, ContrastResult, Covariance, DesignMatrix, EstimateResult, OlsOptions};

/// A request (or pure-program HCP-year) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRow {
    pub hcp_id: String,
    pub period: u8,
    pub program: Program,
    pub y: [f64; 3],
    pub ln_speed: f64,
    pub hcp_type: String,
    pub service_type: String,
    pub state: String,
}

/// HCP-years that sit entirely on one program.
pub fn pure_program_rows(panel: &[PanelRow]) -> Vec<ProgramRow> {
    panel
        .iter()
        .filter_map(|r| {
            r.pure_program().map(|program| ProgramRow {
                hcp_id: r.hcp_id.clone(),
                period: r.period,
                program,
                y: [r.ln_price, r.ln_subsidy, r.ln_netcost],
                ln_speed: r.ln_speed,
                hcp_type: r.hcp_type.clone(),
                service_type: r.service_type.clone(),
                state: r.state.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolsResult {
    pub outcome: Outcome,
    pub estimate: EstimateResult,
    /// `beta_3 - beta_2`: consortium minus stand-alone ad valorem.
    pub contrast: Option<ContrastResult>,
}

fn dummies<'a>(
    rows: &'a [ProgramRow],
    prefix: &str,
    key: impl Fn(&'a ProgramRow) -> String,
) -> Vec<(String, Vec<f64>)> {
    let levels: BTreeSet<String> = rows.iter().map(&key).collect();
    levels
        .into_iter()
        .skip(1)
        .map(|level| {
            let col = rows.iter().map(|r| f64::from(key(r) == level)).collect();
            (format!("{prefix}={level}"), col)
        })
        .collect()
}

/// OLS of the log outcome on the three program dummies (no global
/// intercept), log speed, and year, state, HCP-type and service-type
/// dummies; SEs clustered by HCP.
pub fn pols_fit(rows: &[ProgramRow], outcome: Outcome) -> Result<PolsResult, EstimatorError> {
    if rows.is_empty() {
        return Err(EstimatorError::InvalidSpec("no program rows".into()));
    }
    let mut columns: Vec<(String, Vec<f64>)> = [(Program::P1, "P1"), (Program::P2, "P2"), (Program::P2c, "P2c")]
        .into_iter()
        .map(|(p, name)| (name.to_string(), rows.iter().map(|r| f64::from(r.program == p)).collect()))
        .collect();
    columns.push(("ln_speed".into(), rows.iter().map(|r| r.ln_speed).collect()));
    columns.extend(dummies(rows, "year", |r| r.period.to_string()));
    columns.extend(dummies(rows, "state", |r| r.state.clone()));
    columns.extend(dummies(rows, "hcp_type", |r| r.hcp_type.clone()));
    columns.extend(dummies(rows, "service_type", |r| r.service_type.clone()));
    let ids: Vec<&str> = rows.iter().map(|r| r.hcp_id.as_str()).collect();
    let design = DesignMatrix::from_columns(columns)?.with_clusters(&ids)?;
    let y: Vec<f64> = rows.iter().map(|r| r.y[outcome.index()]).collect();
    let opts = OlsOptions { intercept: false, covariance: Covariance::Cluster, drop_collinear: true, absorbed: 0 };
    let mut estimate = ols_fit(&design, &y, opts)?.result;
    estimate.push_difference("P2c-P2", "P2c", "P2")?;
    let contrast = estimate.contrast("P2c-P2").cloned();
    Ok(PolsResult { outcome, estimate, contrast })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(shift: f64, speed_offset: f64) -> Vec<ProgramRow> {
        let mut out = Vec::new();
        for i in 0..60 {
            let program = [Program::P1, Program::P2, Program::P2c][i % 3];
            let base = match program {
                Program::P1 => 4.0,
                Program::P2 => 3.0,
                Program::P2c => 3.0 + shift,
            };
            let ln_speed = (i % 7) as f64 * 0.3 + speed_offset;
            let wiggle = ((i * 37) % 11) as f64 * 0.01;
            out.push(ProgramRow {
                hcp_id: format!("h{}", i / 2),
                period: (i % 2) as u8,
                program,
                y: [base - 0.2 * ln_speed + wiggle; 3],
                ln_speed,
                hcp_type: format!("t{}", i % 2),
                service_type: "s".into(),
                state: format!("st{}", i % 4),
            });
        }
        out
    }

    #[test]
    fn recovers_planted_log_shift() {
        let r = pols_fit(&rows(1.5, 0.0), Outcome::Price).unwrap();
        let c = r.contrast.unwrap();
        assert!((c.estimate - 1.5).abs() < 0.05, "{}", c.estimate);
    }

    #[test]
    fn identical_programs_give_zero_contrast() {
        let mut rs = rows(0.0, 0.0);
        for r in rs.iter_mut() {
            r.y = [2.0 + 0.1 * r.ln_speed; 3];
        }
        let c = pols_fit(&rs, Outcome::Price).unwrap().contrast.unwrap();
        assert!(c.estimate.abs() < 1e-10);
    }

    #[test]
    fn speed_offset_leaves_contrast() {
        let a = pols_fit(&rows(1.5, 0.0), Outcome::Price).unwrap().contrast.unwrap();
        let b = pols_fit(&rows(1.5, 2.0), Outcome::Price).unwrap().contrast.unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-9);
    }

    #[test]
    fn pure_rows_skip_mixed() {
        use crate::panel::fixtures::row;
        let panel = vec![row("a", 1, 1.0, 0.5, 0.0), row("b", 1, 1.0, 1.0, 0.0), row("c", 0, 1.0, 0.0, 0.0)];
        let pr = pure_program_rows(&panel);
        assert_eq!(pr.len(), 2);
        assert_eq!(pr[0].program, Program::P2);
    }
}
