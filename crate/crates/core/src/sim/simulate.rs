use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{substream, Stream};
use super::{
    aggregate_to_hcp, assign_switching, generate_population, Assignment, Facility, FacilityRow, Population,
    ScenarioConfig, SimError, SwitchingRecord,
};
use crate::mechanism::{
    consortium_from_markets, solve_ad_valorem, solve_monopoly_price, solve_price_cap, EquilibriumOutcome, MarketParams,
    MechanismError,
};
use crate::panel::{Outcome, PanelRow, Program};

/// Per-unit price, subsidy and net cost.
type Levels = [f64; 3];

/// Everything simulated for one facility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityRecord {
    pub facility_id: usize,
    pub hcp_index: usize,
    pub assignment: Assignment,
    pub weight: [f64; 2],
    pub ln_speed: [f64; 2],
    /// Noiseless per-unit levels by period.
    pub levels: [Levels; 2],
    /// Noiseless period-1 levels had the facility stayed on the cap.
    pub counterfactual: Levels,
    /// Observed log outcomes by period (noise and effects included).
    pub observed: [[f64; 3]; 2],
    /// `ln levels[1] - ln counterfactual`; zero for stayers.
    pub effect: [f64; 3],
    pub kappa: Option<f64>,
    pub revenue_ratio: Option<f64>,
    pub revenue_ratio_star: Option<f64>,
}

/// True average effects on one outcome, weighted by period-1 bandwidth
/// shares. `None` when nobody switched on that margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTruth {
    pub tau_12: Option<f64>,
    pub tau_12c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ln_price: MarginTruth,
    pub ln_subsidy: MarginTruth,
    pub ln_netcost: MarginTruth,
    pub n_facilities: usize,
    pub n_switch_p2: usize,
    pub n_switch_p2c: usize,
    pub switch_rate: f64,
    /// Log trend of stayers (and of switchers' counterfactual when g = 1).
    pub trend: f64,
    pub trend_violation: f64,
    pub programs: Vec<Program>,
    pub warnings: Vec<String>,
}

impl GroundTruth {
    pub fn outcome(&self, o: Outcome) -> MarginTruth {
        match o {
            Outcome::Price => self.ln_price,
            Outcome::Subsidy => self.ln_subsidy,
            Outcome::NetCost => self.ln_netcost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: Vec<PanelRow>,
    pub facility_rows: Vec<FacilityRow>,
    pub records: Vec<FacilityRecord>,
    pub switching: Vec<SwitchingRecord>,
    pub population: Population,
    pub truth: GroundTruth,
}

fn cap_levels(eq: &EquilibriumOutcome, pbar: f64) -> Levels {
    [eq.billed_price, eq.billed_price - pbar, pbar]
}

fn ad_valorem_levels(billed: f64, tau: f64) -> Levels {
    [billed, tau * billed, (1.0 - tau) * billed]
}

fn mech(facility: usize) -> impl Fn(MechanismError) -> SimError {
    move |source| SimError::Mechanism { facility, source }
}

/// Period-0 price-cap equilibria.
fn period0(pop: &Population, config: &ScenarioConfig) -> Result<Vec<EquilibriumOutcome>, SimError> {
    pop.facilities
        .par_iter()
        .map(|f| {
            let params =
                MarketParams::new(f.c, f.pbar, config.tau, config.alpha, config.gamma).map_err(mech(f.facility_id))?;
            solve_price_cap(&f.demand(), &params).map_err(mech(f.facility_id))
        })
        .collect()
}

/// Builds the population, assigns programs, solves both periods and
/// aggregates to HCP-years.
pub fn simulate_panel(config: &ScenarioConfig) -> Result<SimulatedPanel, SimError> {
    let population = generate_population(config)?;
    let eq0 = period0(&population, config)?;
    let assignments = assign_switching(&population, &eq0, config)?;
    let records: Vec<FacilityRecord> = population
        .facilities
        .par_iter()
        .zip(eq0.par_iter())
        .zip(assignments.par_iter())
        .map(|((f, e0), a)| simulate_facility(&population, f, e0, *a, config))
        .collect::<Result<_, _>>()?;

    let mut facility_rows = Vec::with_capacity(2 * records.len());
    for r in &records {
        let hcp = &population.hcps[r.hcp_index];
        for t in 0..2u8 {
            let ti = usize::from(t);
            facility_rows.push(FacilityRow {
                hcp_id: hcp.hcp_id.clone(),
                facility_id: r.facility_id,
                period: t,
                program: if t == 0 { Program::P1 } else { r.assignment.program },
                weight: r.weight[ti],
                ln_speed: r.ln_speed[ti],
                y: r.observed[ti],
                hcp_type: hcp.hcp_type.clone(),
                service_type: hcp.service_type.clone(),
                state: hcp.state.clone(),
                n_requests: hcp.n_requests[ti],
            });
        }
    }
    let panel = aggregate_to_hcp(&facility_rows)?;
    let switching = records
        .iter()
        .map(|r| {
            let hcp = &population.hcps[r.hcp_index];
            SwitchingRecord {
                facility_id: r.facility_id,
                hcp_id: hcp.hcp_id.clone(),
                h: r.assignment.h,
                switched: r.assignment.program != Program::P1,
                ln_speed: r.ln_speed[0],
                ln_price: r.levels[0][0].ln(),
                ln_requests: f64::from(hcp.n_requests[0]).ln(),
            }
        })
        .collect();
    let truth = ground_truth_from_records(&records, config.trend, config.trend_violation);
    Ok(SimulatedPanel { panel, facility_rows, records, switching, population, truth })
}

fn simulate_facility(
    pop: &Population,
    f: &Facility,
    e0: &EquilibriumOutcome,
    assignment: Assignment,
    config: &ScenarioConfig,
) -> Result<FacilityRecord, SimError> {
    let id = f.facility_id;
    let program = assignment.program;
    let g = if program == Program::P1 { 1.0 } else { config.trend_violation };
    let scale = (g * config.trend).exp();

    let demand1 = f.demand().rescaled(scale);
    let params1 =
        MarketParams::new(f.c * scale, f.pbar * scale, config.tau, config.alpha, config.gamma).map_err(mech(id))?;
    let counterfactual = cap_levels(&solve_price_cap(&demand1, &params1).map_err(mech(id))?, params1.pbar);

    let (mut kappa, mut revenue_ratio, mut revenue_ratio_star) = (None, None, None);
    let treated = match program {
        Program::P1 => counterfactual,
        Program::P2 => {
            let adv = solve_ad_valorem(&demand1, &params1).map_err(mech(id))?;
            ad_valorem_levels(adv.billed_price, config.tau)
        }
        Program::P2c => {
            let adv = solve_ad_valorem(&demand1, &params1).map_err(mech(id))?;
            let eligible_revenue = adv.billed_price * adv.quantity;
            let base = config.tau * eligible_revenue;
            let r_star = 1.0 / (config.alpha * config.consortium_gamma * base).sqrt();
            let mut rng = substream(config.seed, config.replication, Stream::Consortium, id as u64);
            let u = if config.r_log_spread > 0.0 {
                rng.random_range(-config.r_log_spread..config.r_log_spread)
            } else {
                0.0
            };
            let r_target = r_star * u.exp();
            // The ineligible block shares the eligible curve's shape and is
            // sized to hit the target revenue ratio.
            let mono = solve_monopoly_price(&demand1, params1.c).map_err(mech(id))?;
            let volume = r_target * eligible_revenue / (mono.billed_price * mono.quantity);
            let ineligible = demand1.volume_scaled(volume);
            let out = consortium_from_markets(
                &demand1,
                &ineligible,
                params1.c,
                config.tau,
                config.alpha,
                config.consortium_gamma,
            )
            .map_err(mech(id))?;
            kappa = Some(out.kappa_star);
            revenue_ratio = Some(out.params.r);
            revenue_ratio_star = Some(out.params.r_star());
            ad_valorem_levels(out.kappa_star * adv.billed_price, config.tau)
        }
    };
    let levels = [cap_levels(e0, f.pbar), treated];
    let effect = std::array::from_fn(|o| treated[o].ln() - counterfactual[o].ln());

    let hcp = &pop.hcps[f.hcp_index];
    let ln_speed = [f.speed[0].ln(), f.speed[1].ln()];
    let mut rng = substream(config.seed, config.replication, Stream::Outcome, id as u64);
    let mut observed = [[0.0; 3]; 2];
    for t in 0..2 {
        for o in 0..3 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            observed[t][o] =
                levels[t][o].ln() + hcp.effect + config.speed_effect * ln_speed[t] + config.outcome_noise * eps;
        }
    }
    Ok(FacilityRecord {
        facility_id: id,
        hcp_index: f.hcp_index,
        assignment,
        weight: f.speed,
        ln_speed,
        levels,
        counterfactual,
        observed,
        effect,
        kappa,
        revenue_ratio,
        revenue_ratio_star,
    })
}

/// Share-weighted average effects: `sum_j sum_i w_ij D_i delta_i / sum_j S_j`
/// with `w_ij` the facility's period-1 bandwidth share within its HCP.
pub fn ground_truth_from_records(records: &[FacilityRecord], trend: f64, trend_violation: f64) -> GroundTruth {
    let n_hcp = records.iter().map(|r| r.hcp_index + 1).max().unwrap_or(0);
    let mut totals = vec![0.0; n_hcp];
    for r in records {
        totals[r.hcp_index] += r.weight[1];
    }
    let mut num = [[0.0; 3]; 2];
    let mut den = [0.0; 2];
    let (mut n2, mut n2c) = (0, 0);
    for r in records {
        let m = match r.assignment.program {
            Program::P1 => continue,
            Program::P2 => {
                n2 += 1;
                0
            }
            Program::P2c => {
                n2c += 1;
                1
            }
        };
        let w = r.weight[1] / totals[r.hcp_index];
        den[m] += w;
        for o in 0..3 {
            num[m][o] += w * r.effect[o];
        }
    }
    let margin = |o: usize| MarginTruth {
        tau_12: (n2 > 0).then(|| num[0][o] / den[0]),
        tau_12c: (n2c > 0).then(|| num[1][o] / den[1]),
    };
    let mut warnings = Vec::new();
    if n2 == 0 {
        warnings.push("no ad valorem switchers; tau_12 undefined".to_string());
    }
    if n2c == 0 {
        warnings.push("no consortium switchers; tau_12c undefined".to_string());
    }
    let n = records.len();
    GroundTruth {
        ln_price: margin(0),
        ln_subsidy: margin(1),
        ln_netcost: margin(2),
        n_facilities: n,
        n_switch_p2: n2,
        n_switch_p2c: n2c,
        switch_rate: if n > 0 { (n2 + n2c) as f64 / n as f64 } else { 0.0 },
        trend,
        trend_violation,
        programs: records.iter().map(|r| r.assignment.program).collect(),
        warnings,
    }
}
