//! Synthetic two-period facility panels.
//!
//! Every facility starts on the price cap. In period 1 it may move to the ad
//! valorem program (alone or inside a consortium) when that lowers its net
//! cost and its billed-to-urban price ratio crosses the switching threshold,
//! perturbed by logistic noise. Period-1 prices come from the same solvers
//! as period 0, with demand, cost, cap and urban benchmark rescaled by the
//! trend. Ground-truth effects are the noiseless log differences between
//! the realized and the price-cap counterfactual outcomes.

mod aggregate;
mod config;
mod consortium_rows;
mod population;
mod rng;
mod simulate;
mod switching;

use thiserror::Error;

use crate::mechanism::MechanismError;

pub use aggregate::{aggregate_to_hcp, with_log_of_sums, FacilityRow};
pub use config::ScenarioConfig;
pub use consortium_rows::{simulate_consortium_rows, ConsortiumRow, HumpConfig, HumpDgp};
pub use population::{generate_population, Facility, Hcp, Population};
pub use rng::{substream, Stream};
pub use simulate::{
    ground_truth_from_records, simulate_panel, FacilityRecord, GroundTruth, MarginTruth, SimulatedPanel,
};
pub use switching::{assign_switching, latent_index, Assignment, SwitchingRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config field {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("no admissible demand draw for facility {facility} after {attempts} attempts")]
    RejectionLimit { facility: usize, attempts: usize },
    #[error("facility {facility}: {source}")]
    Mechanism { facility: usize, source: MechanismError },
    #[error("HCP {hcp_id} has no bandwidth in period {period}")]
    EmptyHcp { hcp_id: String, period: u8 },
}
