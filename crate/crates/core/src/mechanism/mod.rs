//! Monopoly equilibria under three subsidy designs.
//!
//! A monopolist sells to a subsidized buyer facing demand `D`. Under a price
//! cap the buyer pays `min(p, pbar)` and the government covers the overbill,
//! restrained only by an audit penalty. Under an ad valorem subsidy the
//! government pays a share `tau` of the bill, which acts like a cut in the
//! seller's marginal cost to `c(1 - tau)`. A consortium mixing eligible and
//! ineligible members can shift charges onto eligible bills; the optimal
//! distortion `kappa*` is hump-shaped in the ineligible revenue ratio.
//!
//! All solvers are pure functions of their inputs.

mod consortium;
mod demand;
mod dominance;
pub mod optimize;
mod penalty;
mod solve;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consortium::{
    consortium_from_markets, consortium_objective, consortium_optimum, ConsortiumMarkets, ConsortiumOutcome,
    ConsortiumParams, ConsortiumRegime,
};
pub use demand::{elasticity, DemandSpec, GeneralDemand};
pub use dominance::{
    dominance_report, DominanceError, DominanceReport, EnforcementThreshold, PartStatus, Precondition,
};
pub use penalty::{PenaltyFunction, QuadraticPenalty};
pub use solve::{
    cap_binds, critical_tau, solve_ad_valorem, solve_monopoly_price, solve_price_cap, CriticalTau, PRICE_TOLERANCE,
    TAU_TOLERANCE, TAU_UPPER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid demand: {0}")]
    InvalidDemand(String),
    #[error("invalid parameter {name}={value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("demand at marginal cost {c} is not positive; no market exists")]
    NonpositiveQuantity { c: f64 },
    #[error("demand is zero at price {price}")]
    ZeroDemand { price: f64 },
    #[error("profit maximizer not bracketed on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("cap {pbar} is not below the monopoly price {p_no}")]
    CapNotBinding { pbar: f64, p_no: f64 },
    #[error("revenue neutrality violated by {gap}")]
    RevenueNeutralityViolation { gap: f64 },
}

/// The mechanism environment: marginal cost, cap, subsidy rate, audit
/// probability, and penalty curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub c: f64,
    pub pbar: f64,
    pub tau: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl MarketParams {
    pub fn new(c: f64, pbar: f64, tau: f64, alpha: f64, gamma: f64) -> Result<Self, MechanismError> {
        check(c.is_finite() && c >= 0.0, "c", c, "marginal cost must be >= 0")?;
        check(pbar.is_finite() && pbar > 0.0, "pbar", pbar, "cap must be > 0")?;
        check(tau > 0.0 && tau < 1.0, "tau", tau, "subsidy rate must lie in (0, 1)")?;
        check(alpha > 0.0 && alpha <= 1.0, "alpha", alpha, "audit probability must lie in (0, 1]")?;
        check(gamma.is_finite() && gamma > 0.0, "gamma", gamma, "penalty curvature must be > 0")?;
        Ok(MarketParams { c, pbar, tau, alpha, gamma })
    }

    /// Enforcement intensity `alpha * gamma`.
    pub fn enforcement(&self) -> f64 {
        self.alpha * self.gamma
    }

    pub fn with_tau(self, tau: f64) -> Result<Self, MechanismError> {
        Self::new(self.c, self.pbar, tau, self.alpha, self.gamma)
    }

    pub fn with_pbar(self, pbar: f64) -> Result<Self, MechanismError> {
        Self::new(self.c, pbar, self.tau, self.alpha, self.gamma)
    }
}

pub(crate) fn check(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), MechanismError> {
    if ok {
        Ok(())
    } else {
        Err(MechanismError::InvalidParameter { name, value, reason })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NoSubsidy,
    CapBinding,
    CapSlack,
    AdValorem,
}

/// Equilibrium of any of the single-market mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOutcome {
    /// Price billed by the seller.
    pub billed_price: f64,
    /// Price borne by the buyer.
    pub consumer_price: f64,
    pub quantity: f64,
    /// Buyer expenditure `consumer_price * quantity`.
    pub provider_expenditure: f64,
    pub government_outlay: f64,
    pub profit: f64,
    pub regime: Regime,
}
