use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{substream, Stream};
use super::{Population, ScenarioConfig, SimError};
use crate::mechanism::{critical_tau, CriticalTau, EquilibriumOutcome};
use crate::panel::Program;

/// Period-1 program choice for one facility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub program: Program,
    /// `tau >= tau*`: the ad valorem consumer price is at most the cap.
    pub benefits: bool,
    /// Deterministic rule indicator.
    pub h: bool,
    /// Period-0 billed price over the urban benchmark.
    pub ratio: f64,
    pub tau_star: f64,
}

/// Facility-level row for the switching logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRecord {
    pub facility_id: usize,
    pub hcp_id: String,
    pub h: bool,
    pub switched: bool,
    pub ln_speed: f64,
    pub ln_price: f64,
    pub ln_requests: f64,
}

/// Signed log distance of the price ratio from the threshold; positive
/// means the deterministic rule favors switching.
pub fn latent_index(ratio: f64, threshold: f64, above: bool) -> f64 {
    let d = ratio.ln() - threshold.ln();
    if above {
        d
    } else {
        -d
    }
}

fn logistic<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

/// Applies the cost-ratio rule with logistic noise. Only facilities for
/// which switching lowers net cost (`tau >= tau*`) may switch; a switcher
/// joins a consortium with probability `p2c_fraction`.
pub fn assign_switching(
    population: &Population,
    period0: &[EquilibriumOutcome],
    config: &ScenarioConfig,
) -> Result<Vec<Assignment>, SimError> {
    let threshold = config.ratio_threshold();
    population
        .facilities
        .iter()
        .zip(period0)
        .map(|(f, eq)| {
            let mut rng = substream(config.seed, config.replication, Stream::Switching, f.facility_id as u64);
            let noise = logistic(&mut rng);
            let join: f64 = rng.random();
            let tau_star = match critical_tau(&f.demand(), f.c, f.pbar)
                .map_err(|source| SimError::Mechanism { facility: f.facility_id, source })?
            {
                CriticalTau::Rate(t) => t,
                CriticalTau::NoInteriorSolution => f64::INFINITY,
            };
            let benefits = config.tau >= tau_star;
            let ratio = eq.billed_price / f.p_u;
            let index = latent_index(ratio, threshold, config.switch_when_above_threshold);
            let h = index > 0.0;
            let switch = benefits && index + config.switch_noise * noise > 0.0;
            let program = match (switch, join < config.p2c_fraction) {
                (false, _) => Program::P1,
                (true, true) => Program::P2c,
                (true, false) => Program::P2,
            };
            Ok(Assignment { program, benefits, h, ratio, tau_star })
        })
        .collect()
}
