use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::rng::{substream, Stream};
use super::{ScenarioConfig, SimError};
use crate::mechanism::DemandSpec;

const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Hcp {
    pub index: usize,
    pub hcp_id: String,
    pub hcp_type: String,
    pub service_type: String,
    pub state: String,
    /// Time-invariant log-outcome shift.
    pub effect: f64,
    pub n_requests: [u32; 2],
    pub facilities: Range<usize>,
}

/// A connected site with its own demand curve and cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Facility {
    pub facility_id: usize,
    pub hcp_index: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub pbar: f64,
    /// Urban benchmark price in period 0.
    pub p_u: f64,
    /// Purchased bandwidth (Mbps) in each period; the aggregation weight.
    pub speed: [f64; 2],
}

impl Facility {
    /// Linear demand `a - b p`.
    pub fn demand(&self) -> DemandSpec {
        DemandSpec::Linear { a: self.a, b: self.b }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub hcps: Vec<Hcp>,
    pub facilities: Vec<Facility>,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        mean
    } else {
        Normal::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(mean)
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).map(|d| d.sample(rng) as u32).unwrap_or(0)
    }
}

/// Draws HCPs and their facilities; deterministic in `(seed, replication)`.
pub fn generate_population(config: &ScenarioConfig) -> Result<Population, SimError> {
    config.validate()?;
    let mut pop = Population::default();
    for j in 0..config.n_hcps {
        let mut rng = substream(config.seed, config.replication, Stream::Hcp, j as u64);
        let n_fac = 1 + poisson(&mut rng, config.facilities_per_hcp_mean - 1.0) as usize;
        let hcp_type = format!("type{}", rng.random_range(0..config.n_hcp_types));
        let service_type = format!("svc{}", rng.random_range(0..config.n_service_types));
        let state = format!("S{:02}", rng.random_range(0..config.n_states));
        let effect = normal(&mut rng, 0.0, config.hcp_effect_sd);
        let extra = (config.requests_mean - 1.0).max(0.0);
        let n_requests = [1 + poisson(&mut rng, extra), 1 + poisson(&mut rng, extra)];
        let start = pop.facilities.len();
        for _ in 0..n_fac {
            let id = pop.facilities.len();
            pop.facilities.push(draw_facility(config, id, j)?);
        }
        pop.hcps.push(Hcp {
            index: j,
            hcp_id: format!("H{j:05}"),
            hcp_type,
            service_type,
            state,
            effect,
            n_requests,
            facilities: start..pop.facilities.len(),
        });
    }
    Ok(pop)
}

fn draw_facility(config: &ScenarioConfig, id: usize, hcp_index: usize) -> Result<Facility, SimError> {
    let mut rng = substream(config.seed, config.replication, Stream::Facility, id as u64);
    for _ in 0..MAX_ATTEMPTS {
        let a = uniform(&mut rng, config.demand_a);
        let b = uniform(&mut rng, config.demand_b);
        let c = uniform(&mut rng, config.cost_c);
        if a <= b * c {
            continue;
        }
        DemandSpec::linear(a, b).map_err(|source| SimError::Mechanism { facility: id, source })?;
        let p_no = 0.5 * (a / b + c);
        let pbar = p_no - uniform(&mut rng, config.cap_markdown) * c;
        if pbar <= 0.0 {
            continue;
        }
        let p_u = pbar * normal(&mut rng, config.urban_log_mean, config.urban_log_sd).exp();
        let s0 = normal(&mut rng, config.speed_log_mean, config.speed_log_sd).exp();
        let s1 = s0 * normal(&mut rng, 0.0, config.speed_drift_sd).exp();
        return Ok(Facility { facility_id: id, hcp_index, a, b, c, pbar, p_u, speed: [s0, s1] });
    }
    Err(SimError::RejectionLimit { facility: id, attempts: MAX_ATTEMPTS })
}
