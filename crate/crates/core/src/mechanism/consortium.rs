use serde::{Deserialize, Serialize};

use super::{check, solve_ad_valorem, solve_monopoly_price, DemandSpec, MarketParams, MechanismError};

/// Reduced-form consortium environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsortiumParams {
    /// Eligible subsidy base: reimbursement at the undistorted equilibrium.
    pub b: f64,
    /// Ineligible-to-eligible revenue ratio.
    pub r: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl ConsortiumParams {
    pub fn new(b: f64, r: f64, alpha: f64, gamma: f64) -> Result<Self, MechanismError> {
        check(b.is_finite() && b > 0.0, "B", b, "subsidy base must be > 0")?;
        check(r.is_finite() && r >= 0.0, "R", r, "revenue ratio must be >= 0")?;
        check(alpha > 0.0 && alpha <= 1.0, "alpha", alpha, "audit probability must lie in (0, 1]")?;
        check(gamma.is_finite() && gamma > 0.0, "gamma", gamma, "penalty curvature must be > 0")?;
        Ok(ConsortiumParams { b, r, alpha, gamma })
    }

    /// Ratio at which the feasibility and enforcement branches meet.
    pub fn r_star(&self) -> f64 {
        1.0 / (self.alpha * self.gamma * self.b).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsortiumRegime {
    /// `kappa* = 1 + R`: not enough ineligible revenue to shift.
    FeasibilityBound,
    /// `kappa* = 1 + 1/(alpha gamma B R)`: the marginal penalty binds.
    EnforcementInterior,
    /// `R = 0`.
    NoDistortion,
}

/// Equilibria of both member markets and the reallocated internal prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsortiumMarkets {
    pub p_eligible: f64,
    pub q_eligible: f64,
    pub p_ineligible: f64,
    pub q_ineligible: f64,
    pub tau: f64,
    pub tilde_p_eligible: f64,
    pub tilde_p_ineligible: f64,
}

impl ConsortiumMarkets {
    pub fn revenue_before(&self) -> f64 {
        self.p_eligible * self.q_eligible + self.p_ineligible * self.q_ineligible
    }

    pub fn revenue_after(&self) -> f64 {
        self.tilde_p_eligible * self.q_eligible + self.tilde_p_ineligible * self.q_ineligible
    }

    /// Net-cost reduction measured on the eligible bill.
    pub fn delta_c_eligible_side(&self) -> f64 {
        self.tau * (self.tilde_p_eligible - self.p_eligible) * self.q_eligible
    }

    /// Net-cost reduction measured on the ineligible bill.
    pub fn delta_c_ineligible_side(&self) -> f64 {
        self.tau * (self.p_ineligible - self.tilde_p_ineligible) * self.q_ineligible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsortiumOutcome {
    pub params: ConsortiumParams,
    pub kappa_star: f64,
    pub regime: ConsortiumRegime,
    /// Reduction in total member net cost, `B (kappa* - 1)`.
    pub delta_c: f64,
    /// Increase in government outlay; equals `delta_c`.
    pub delta_g: f64,
    pub markets: Option<ConsortiumMarkets>,
}

/// `Psi(kappa) = B kappa - alpha * (gamma R / 2) * (B (kappa - 1))^2`.
pub fn consortium_objective(params: &ConsortiumParams, kappa: f64) -> f64 {
    let shift = params.b * (kappa - 1.0);
    params.b * kappa - params.alpha * 0.5 * params.gamma * params.r * shift * shift
}

/// Optimal distortion `kappa* = min{1 + R, 1 + 1/(alpha gamma B R)}`.
///
/// At `R = R*` both branches coincide and the regime is reported as
/// [`ConsortiumRegime::EnforcementInterior`].
pub fn consortium_optimum(params: &ConsortiumParams) -> ConsortiumOutcome {
    let r = params.r;
    let (kappa_star, regime) = if r == 0.0 {
        (1.0, ConsortiumRegime::NoDistortion)
    } else if r < params.r_star() {
        (1.0 + r, ConsortiumRegime::FeasibilityBound)
    } else {
        (1.0 + 1.0 / (params.alpha * params.gamma * params.b * r), ConsortiumRegime::EnforcementInterior)
    };
    let delta = params.b * (kappa_star - 1.0);
    ConsortiumOutcome { params: *params, kappa_star, regime, delta_c: delta, delta_g: delta, markets: None }
}

/// Builds `(B, R)` from the two member markets, solves for `kappa*`, and
/// reconstructs the internal prices under revenue neutrality.
pub fn consortium_from_markets(
    demand_eligible: &DemandSpec,
    demand_ineligible: &DemandSpec,
    c: f64,
    tau: f64,
    alpha: f64,
    gamma: f64,
) -> Result<ConsortiumOutcome, MechanismError> {
    // pbar plays no role in either member market.
    let params = MarketParams::new(c, 1.0, tau, alpha, gamma)?;
    let eligible = solve_ad_valorem(demand_eligible, &params)?;
    let ineligible = solve_monopoly_price(demand_ineligible, c)?;

    let (p_e, q_e) = (eligible.billed_price, eligible.quantity);
    let (p_i, q_i) = (ineligible.billed_price, ineligible.quantity);
    let eligible_revenue = p_e * q_e;
    let b = tau * eligible_revenue;
    let r = (p_i * q_i) / eligible_revenue;

    let mut outcome = consortium_optimum(&ConsortiumParams::new(b, r, alpha, gamma)?);
    let tilde_p_e = outcome.kappa_star * p_e;
    let shifted = (tilde_p_e - p_e) * q_e;
    let tilde_p_i = p_i - shifted / q_i;

    let scale = eligible_revenue + p_i * q_i;
    if tilde_p_i < -1e-9 * p_i.max(1.0) {
        return Err(MechanismError::RevenueNeutralityViolation { gap: tilde_p_i * q_i });
    }
    let markets = ConsortiumMarkets {
        p_eligible: p_e,
        q_eligible: q_e,
        p_ineligible: p_i,
        q_ineligible: q_i,
        tau,
        tilde_p_eligible: tilde_p_e,
        tilde_p_ineligible: tilde_p_i.max(0.0),
    };
    let gap = markets.revenue_after() - markets.revenue_before();
    if gap.abs() > 1e-9 * scale {
        return Err(MechanismError::RevenueNeutralityViolation { gap });
    }
    outcome.markets = Some(markets);
    Ok(outcome)
}
