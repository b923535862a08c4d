use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::panel::{Outcome, PanelRow, Program};

/// One facility in one period, ready for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityRow {
    pub hcp_id: String,
    pub facility_id: usize,
    pub period: u8,
    pub program: Program,
    /// Bandwidth (Mbps); the aggregation weight.
    pub weight: f64,
    pub ln_speed: f64,
    /// Log price, subsidy and net cost per unit.
    pub y: [f64; 3],
    pub hcp_type: String,
    pub service_type: String,
    pub state: String,
    pub n_requests: u32,
}

/// Bandwidth-weighted HCP-year means of the facility log outcomes, program
/// shares, and within-HCP level sums (`sum exp(y) * weight`).
///
/// Rows come out ordered by first appearance of the HCP, then period.
pub fn aggregate_to_hcp(rows: &[FacilityRow]) -> Result<Vec<PanelRow>, SimError> {
    struct Acc<'a> {
        first: &'a FacilityRow,
        w: f64,
        y: [f64; 3],
        sums: [f64; 3],
        s2: f64,
        s2c: f64,
        ln_speed: f64,
    }
    let mut order: Vec<(String, u8)> = Vec::new();
    let mut acc: HashMap<(String, u8), Acc> = HashMap::new();
    for r in rows {
        let key = (r.hcp_id.clone(), r.period);
        let a = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Acc { first: r, w: 0.0, y: [0.0; 3], sums: [0.0; 3], s2: 0.0, s2c: 0.0, ln_speed: 0.0 }
        });
        a.w += r.weight;
        for o in 0..3 {
            a.y[o] += r.weight * r.y[o];
            a.sums[o] += r.weight * r.y[o].exp();
        }
        a.ln_speed += r.weight * r.ln_speed;
        match r.program {
            Program::P1 => {}
            Program::P2 => a.s2 += r.weight,
            Program::P2c => a.s2c += r.weight,
        }
    }
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, (id, _)) in order.iter().enumerate() {
        first_seen.entry(id.as_str()).or_insert(i);
    }
    let mut keys = order.clone();
    keys.sort_by_key(|(id, p)| (first_seen[id.as_str()], *p));
    keys.into_iter()
        .map(|key| {
            let a = &acc[&key];
            if !(a.w > 0.0) {
                return Err(SimError::EmptyHcp { hcp_id: key.0.clone(), period: key.1 });
            }
            let mut row = PanelRow {
                hcp_id: key.0.clone(),
                period: key.1,
                ln_price: 0.0,
                ln_subsidy: 0.0,
                ln_netcost: 0.0,
                s2: a.s2 / a.w,
                s2c: a.s2c / a.w,
                ln_speed: a.ln_speed / a.w,
                hcp_type: a.first.hcp_type.clone(),
                service_type: a.first.service_type.clone(),
                state: a.first.state.clone(),
                n_requests: a.first.n_requests,
                speed_mbps: a.w,
                level_sums: Some(a.sums),
            };
            for o in Outcome::ALL {
                row.set_outcome(o, a.y[o.index()] / a.w);
            }
            Ok(row)
        })
        .collect()
}

/// Replaces the weighted-mean log outcomes with logs of the level sums.
pub fn with_log_of_sums(panel: &[PanelRow]) -> Vec<PanelRow> {
    panel
        .iter()
        .map(|r| {
            let mut out = r.clone();
            if let Some(s) = r.level_sums {
                for o in Outcome::ALL {
                    out.set_outcome(o, s[o.index()].ln());
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frow(hcp: &str, id: usize, period: u8, program: Program, weight: f64, y: f64) -> FacilityRow {
        FacilityRow {
            hcp_id: hcp.into(),
            facility_id: id,
            period,
            program,
            weight,
            ln_speed: weight.ln(),
            y: [y; 3],
            hcp_type: "t".into(),
            service_type: "s".into(),
            state: "x".into(),
            n_requests: 2,
        }
    }

    #[test]
    fn single_facility_is_identity() {
        let rows = aggregate_to_hcp(&[frow("a", 0, 0, Program::P1, 3.0, 1.7)]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].ln_price, 1.7);
        assert_eq!(rows[0].speed_mbps, 3.0);
        assert_eq!(rows[0].ln_speed, 3f64.ln());
    }

    #[test]
    fn equal_weights_average_and_share() {
        let rows =
            aggregate_to_hcp(&[frow("a", 0, 1, Program::P1, 2.0, 10.0), frow("a", 1, 1, Program::P2, 2.0, 20.0)])
                .unwrap();
        assert_eq!(rows[0].ln_price, 15.0);
        assert_eq!(rows[0].s2, 0.5);
        assert_eq!(rows[0].s2c, 0.0);
    }

    #[test]
    fn shares_partition_and_order() {
        let rows = aggregate_to_hcp(&[
            frow("b", 0, 1, Program::P2c, 1.0, 0.0),
            frow("a", 1, 0, Program::P1, 1.0, 0.0),
            frow("b", 2, 0, Program::P1, 1.0, 0.0),
            frow("b", 3, 1, Program::P1, 3.0, 0.0),
            frow("b", 4, 1, Program::P2, 2.0, 0.0),
        ])
        .unwrap();
        let ids: Vec<(&str, u8)> = rows.iter().map(|r| (r.hcp_id.as_str(), r.period)).collect();
        assert_eq!(ids, vec![("b", 0), ("b", 1), ("a", 0)]);
        let b1 = &rows[1];
        let p1 = 1.0 - b1.s2 - b1.s2c;
        assert!((b1.s2 + b1.s2c + p1 - 1.0).abs() < 1e-15);
        assert!((b1.s2 - 2.0 / 6.0).abs() < 1e-15);
        assert!(aggregate_to_hcp(&[frow("z", 0, 0, Program::P1, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn log_of_sums_variant() {
        let rows = aggregate_to_hcp(&[frow("a", 0, 0, Program::P1, 1.0, 0.0), frow("a", 1, 0, Program::P1, 1.0, 0.0)])
            .unwrap();
        let s = with_log_of_sums(&rows);
        assert!((s[0].ln_price - 2f64.ln()).abs() < 1e-15);
    }
}
