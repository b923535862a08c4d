//! HCP-year panel records shared by the simulator, estimators and CSV layer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Price,
    Subsidy,
    NetCost,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Price, Outcome::Subsidy, Outcome::NetCost];

    pub fn column(self) -> &'static str {
        match self {
            Outcome::Price => "ln_price",
            Outcome::Subsidy => "ln_subsidy",
            Outcome::NetCost => "ln_netcost",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Outcome {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ln_price" | "price" => Ok(Outcome::Price),
            "ln_subsidy" | "subsidy" => Ok(Outcome::Subsidy),
            "ln_netcost" | "netcost" | "net_cost" => Ok(Outcome::NetCost),
            other => Err(PanelError::UnknownColumn(other.to_string())),
        }
    }
}

/// Subsidy program: price cap, ad valorem, or ad valorem inside a consortium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Program {
    P1,
    P2,
    P2c,
}

/// One HCP-year observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub hcp_id: String,
    pub period: u8,
    pub ln_price: f64,
    pub ln_subsidy: f64,
    pub ln_netcost: f64,
    /// Bandwidth share on the ad valorem program.
    pub s2: f64,
    /// Bandwidth share on the consortium program.
    pub s2c: f64,
    pub ln_speed: f64,
    pub hcp_type: String,
    pub service_type: String,
    pub state: String,
    pub n_requests: u32,
    pub speed_mbps: f64,
    /// Within-HCP sums of level price, subsidy and net cost, when known.
    #[serde(skip)]
    pub level_sums: Option<[f64; 3]>,
}

impl PanelRow {
    pub fn outcome(&self, o: Outcome) -> f64 {
        match o {
            Outcome::Price => self.ln_price,
            Outcome::Subsidy => self.ln_subsidy,
            Outcome::NetCost => self.ln_netcost,
        }
    }

    pub fn set_outcome(&mut self, o: Outcome, v: f64) {
        match o {
            Outcome::Price => self.ln_price = v,
            Outcome::Subsidy => self.ln_subsidy = v,
            Outcome::NetCost => self.ln_netcost = v,
        }
    }

    pub fn d2(&self) -> bool {
        self.s2 > 0.0
    }

    pub fn d2c(&self) -> bool {
        self.s2c > 0.0
    }

    /// The HCP-year sits entirely on one program.
    pub fn pure_program(&self) -> Option<Program> {
        match (self.s2, self.s2c) {
            (0.0, 0.0) => Some(Program::P1),
            (1.0, _) => Some(Program::P2),
            (_, 1.0) => Some(Program::P2c),
            _ => None,
        }
    }

    /// Numeric covariate by column name.
    pub fn numeric(&self, column: &str) -> Option<f64> {
        Some(match column {
            "ln_price" => self.ln_price,
            "ln_subsidy" => self.ln_subsidy,
            "ln_netcost" => self.ln_netcost,
            "s2" => self.s2,
            "s2c" => self.s2c,
            "ln_speed" => self.ln_speed,
            "ln_requests" => f64::from(self.n_requests).ln(),
            "n_requests" => f64::from(self.n_requests),
            "speed_mbps" => self.speed_mbps,
            "period" => f64::from(self.period),
            _ => return None,
        })
    }

    /// Categorical column by name.
    pub fn category(&self, column: &str) -> Option<&str> {
        match column {
            "hcp_type" => Some(&self.hcp_type),
            "service_type" => Some(&self.service_type),
            "state" => Some(&self.state),
            _ => None,
        }
    }
}

pub const NUMERIC_COLUMNS: [&str; 10] = [
    "ln_price",
    "ln_subsidy",
    "ln_netcost",
    "s2",
    "s2c",
    "ln_speed",
    "ln_requests",
    "n_requests",
    "speed_mbps",
    "period",
];
pub const CATEGORICAL_COLUMNS: [&str; 3] = ["hcp_type", "service_type", "state"];

pub fn is_known_column(name: &str) -> bool {
    NUMERIC_COLUMNS.contains(&name) || CATEGORICAL_COLUMNS.contains(&name)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("row {row}: {reason}")]
    Invalid { row: usize, reason: String },
    #[error("HCP {0} is not observed in both periods")]
    Unbalanced(String),
}

/// Checks share bounds, pre-period zero shares and finiteness.
pub fn validate_panel(rows: &[PanelRow]) -> Result<(), PanelError> {
    for (i, r) in rows.iter().enumerate() {
        let bad = |reason: &str| Err(PanelError::Invalid { row: i, reason: reason.to_string() });
        if r.period > 1 {
            return bad("period must be 0 or 1");
        }
        if ![r.ln_price, r.ln_subsidy, r.ln_netcost, r.s2, r.s2c, r.ln_speed].iter().all(|v| v.is_finite()) {
            return bad("non-finite outcome, share or covariate");
        }
        if !(0.0..=1.0).contains(&r.s2) || !(0.0..=1.0).contains(&r.s2c) || r.s2 + r.s2c > 1.0 + 1e-12 {
            return bad("shares must lie in [0, 1] and sum to at most 1");
        }
        if r.period == 0 && (r.s2 != 0.0 || r.s2c != 0.0) {
            return bad("pre-period shares must be zero");
        }
        if r.n_requests == 0 {
            return bad("n_requests must be positive");
        }
    }
    Ok(())
}

/// Pairs each HCP's period-0 and period-1 rows, in order of first appearance.
pub fn balanced_pairs(rows: &[PanelRow]) -> Result<Vec<(&PanelRow, &PanelRow)>, PanelError> {
    let mut order = Vec::new();
    let mut map: BTreeMap<&str, [Option<&PanelRow>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = map.entry(&r.hcp_id).or_insert_with(|| {
            order.push(r.hcp_id.as_str());
            [None, None]
        });
        let p = usize::from(r.period.min(1));
        if slot[p].is_some() {
            return Err(PanelError::Invalid {
                row: 0,
                reason: format!("duplicate HCP-year {} t={}", r.hcp_id, r.period),
            });
        }
        slot[p] = Some(r);
    }
    order
        .into_iter()
        .map(|id| match map[id] {
            [Some(a), Some(b)] => Ok((a, b)),
            _ => Err(PanelError::Unbalanced(id.to_string())),
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn validation_catches_pre_period_shares() {
        assert!(validate_panel(&three_hcp()).is_ok());
        let mut bad = three_hcp();
        bad[0].s2 = 0.2;
        assert!(validate_panel(&bad).is_err());
        let mut over = three_hcp();
        over[3].s2c = 0.5;
        assert!(validate_panel(&over).is_err());
    }

    #[test]
    fn pairs_and_programs() {
        let rows = three_hcp();
        let pairs = balanced_pairs(&rows).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1].1.pure_program(), Some(Program::P2));
        assert!(balanced_pairs(&rows[..5]).is_err());
        assert_eq!("net_cost".parse::<Outcome>().unwrap(), Outcome::NetCost);
    }
}
