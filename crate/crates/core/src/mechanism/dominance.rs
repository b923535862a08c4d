use serde::{Deserialize, Serialize};

use super::optimize::bisect;
use super::{
    cap_binds, critical_tau, elasticity, solve_ad_valorem, solve_monopoly_price, solve_price_cap, CriticalTau,
    DemandSpec, MarketParams, MechanismError, Regime,
};

/// Grid size for the elasticity check behind the expenditure comparison.
const ELASTICITY_GRID: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartStatus {
    Pass,
    Fail,
    /// The part's hypothesis does not hold, so it makes no claim.
    NotApplicable,
}

impl PartStatus {
    fn from_bool(ok: bool) -> Self {
        if ok {
            PartStatus::Pass
        } else {
            PartStatus::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precondition {
    CapDoesNotBind,
    TauBelowCritical { tau: String, tau_star: String },
    NoCriticalRate,
}

/// Enforcement level below which ad valorem outlays undercut the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnforcementThreshold {
    /// `alpha * gamma` at which `G^adv = G^cap`.
    pub alpha_gamma: f64,
    /// Whether `G^adv < G^cap` at the supplied enforcement.
    pub holds_at_current: bool,
    pub government_outlay_ad_valorem: f64,
    pub government_outlay_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub tau_star: f64,
    /// Consumer price no higher than the cap.
    pub consumer_price: PartStatus,
    /// `p_c^adv == pbar` within tolerance (happens at `tau = tau*`).
    pub consumer_price_equal: bool,
    /// Quantity no lower than under the cap.
    pub quantity: PartStatus,
    /// Expenditure no higher, when demand is inelastic between the prices.
    pub expenditure: PartStatus,
    /// A positive `alpha * gamma` threshold exists below which outlays fall.
    pub outlay: PartStatus,
    pub threshold: EnforcementThreshold,
}

impl DominanceReport {
    /// No part is violated; inapplicable parts count as satisfied.
    pub fn all_pass(&self) -> bool {
        [self.consumer_price, self.quantity, self.expenditure, self.outlay].iter().all(|s| *s != PartStatus::Fail)
    }
}

/// Evaluates the four-part comparison of the ad valorem and price-cap
/// equilibria under a binding cap with `tau >= tau*`.
pub fn dominance_report(demand: &DemandSpec, params: &MarketParams) -> Result<DominanceReport, DominanceError> {
    let mut unmet = Vec::new();
    if !cap_binds(demand, params)? {
        unmet.push(Precondition::CapDoesNotBind);
        return Err(DominanceError::PreconditionUnmet(unmet));
    }
    let p_no = solve_monopoly_price(demand, params.c)?.billed_price;
    // A cap at or above the monopoly price that binds only through weak
    // enforcement is undercut by any positive rate.
    let tau_star = if params.pbar >= p_no {
        0.0
    } else {
        match critical_tau(demand, params.c, params.pbar)? {
            CriticalTau::Rate(t) => t,
            CriticalTau::NoInteriorSolution => {
                unmet.push(Precondition::NoCriticalRate);
                return Err(DominanceError::PreconditionUnmet(unmet));
            }
        }
    };
    if params.tau < tau_star - 1e-9 {
        unmet.push(Precondition::TauBelowCritical { tau: format!("{}", params.tau), tau_star: format!("{tau_star}") });
        return Err(DominanceError::PreconditionUnmet(unmet));
    }

    let adv = solve_ad_valorem(demand, params)?;
    let cap = solve_price_cap(demand, params)?;
    debug_assert_eq!(cap.regime, Regime::CapBinding);

    let tol = 1e-9 * params.pbar.max(1.0);
    let p_c = adv.consumer_price;
    let consumer_price = PartStatus::from_bool(p_c <= params.pbar + tol);
    let consumer_price_equal = (p_c - params.pbar).abs() <= 1e-7 * params.pbar.max(1.0);
    let quantity = PartStatus::from_bool(adv.quantity >= cap.quantity - 1e-9 * cap.quantity.max(1.0));

    let inelastic = (0..ELASTICITY_GRID).all(|i| {
        let p = p_c + (params.pbar - p_c) * i as f64 / (ELASTICITY_GRID - 1) as f64;
        matches!(elasticity(demand, p), Ok(e) if e <= 1.0)
    });
    let expenditure = if inelastic && p_c <= params.pbar + tol {
        PartStatus::from_bool(
            adv.provider_expenditure <= cap.provider_expenditure + 1e-9 * cap.provider_expenditure.max(1.0),
        )
    } else {
        PartStatus::NotApplicable
    };

    let threshold = outlay_threshold(demand, params, adv.government_outlay, cap.government_outlay)?;
    let outlay = PartStatus::from_bool(threshold.alpha_gamma > 0.0 && threshold.alpha_gamma.is_finite());

    Ok(DominanceReport { tau_star, consumer_price, consumer_price_equal, quantity, expenditure, outlay, threshold })
}

/// Bisects (in log space) for the `alpha * gamma` at which the cap outlay
/// `D(pbar)^2 / (alpha gamma)` equals the ad valorem outlay.
fn outlay_threshold(
    demand: &DemandSpec,
    params: &MarketParams,
    g_adv: f64,
    g_cap: f64,
) -> Result<EnforcementThreshold, MechanismError> {
    let q_cap = demand.quantity(params.pbar);
    let gap = |log_ag: f64| q_cap * q_cap / log_ag.exp() - g_adv;
    let ag = bisect(gap, (1e-12f64).ln(), (1e12f64).ln(), 1e-13).map(f64::exp).unwrap_or(f64::NAN);
    Ok(EnforcementThreshold {
        alpha_gamma: ag,
        holds_at_current: g_adv < g_cap,
        government_outlay_ad_valorem: g_adv,
        government_outlay_cap: g_cap,
    })
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DominanceError {
    #[error("preconditions unmet: {0:?}")]
    PreconditionUnmet(Vec<Precondition>),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> DemandSpec {
        DemandSpec::linear(100.0, 1.0).unwrap()
    }

    #[test]
    fn example_passes_all_parts() {
        let params = MarketParams::new(20.0, 55.0, 0.65, 0.5, 3.0).unwrap();
        let r = dominance_report(&linear(), &params).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.consumer_price, PartStatus::Pass);
        assert_eq!(r.quantity, PartStatus::Pass);
        // Elasticity exceeds one on [53.5, 55], so the expenditure part is silent.
        assert_eq!(r.expenditure, PartStatus::NotApplicable);
        assert_eq!(r.outlay, PartStatus::Pass);
        // Direct evaluation: G^adv = 4620.107..., G^cap = 45^2 / 1.5 = 1350.
        assert!(!r.threshold.holds_at_current);
        assert!((r.threshold.alpha_gamma - 2025.0 / 4_620.107_142_857_143).abs() < 1e-9);
    }

    #[test]
    fn equality_at_critical_rate() {
        let params = MarketParams::new(20.0, 55.0, 0.5, 0.5, 3.0).unwrap();
        let r = dominance_report(&linear(), &params).unwrap();
        assert!(r.consumer_price_equal);
        assert_eq!(r.consumer_price, PartStatus::Pass);
    }

    #[test]
    fn expenditure_part_needs_inelastic_demand() {
        // Elasticity at any monopoly price with positive effective cost is
        // p / (p - c(1 - tau)) > 1, so the hypothesis fails at p_c^adv.
        let d = DemandSpec::linear(120.0, 1.0).unwrap();
        let params = MarketParams::new(80.0, 60.8, 0.99, 0.5, 3.0).unwrap();
        let r = dominance_report(&d, &params).unwrap();
        assert_eq!(r.expenditure, PartStatus::NotApplicable);
        assert!(elasticity(&d, 60.4).unwrap() > 1.0);
    }

    #[test]
    fn reports_unmet_preconditions() {
        let params = MarketParams::new(20.0, 55.0, 0.3, 0.5, 3.0).unwrap();
        match dominance_report(&linear(), &params) {
            Err(DominanceError::PreconditionUnmet(v)) => {
                assert!(matches!(v[0], Precondition::TauBelowCritical { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
        let slack = MarketParams::new(20.0, 70.0, 0.5, 1.0, 1e9).unwrap();
        assert_eq!(
            dominance_report(&linear(), &slack).unwrap_err(),
            DominanceError::PreconditionUnmet(vec![Precondition::CapDoesNotBind])
        );
    }
}
