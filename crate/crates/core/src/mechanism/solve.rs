use super::optimize::{bisect, golden_section_max};
use super::penalty::{PenaltyFunction, QuadraticPenalty};
use super::{DemandSpec, EquilibriumOutcome, MarketParams, MechanismError, Regime};

/// Bracket width at which the golden-section search stops.
pub const PRICE_TOLERANCE: f64 = 1e-10;
/// Bisection tolerance for the critical subsidy rate.
pub const TAU_TOLERANCE: f64 = 1e-10;
/// Upper end of the searched subsidy-rate domain.
pub const TAU_UPPER: f64 = 1.0 - 1e-9;

/// Unsubsidized monopoly equilibrium at marginal cost `c`.
///
/// Linear demand uses `p = (a/b + c) / 2`. Any other curve is solved by
/// golden-section maximization of `(p - c) D(p)` over the support hint,
/// followed by bisection on the first-order condition inside the final
/// bracket to recover full precision.
pub fn solve_monopoly_price(demand: &DemandSpec, c: f64) -> Result<EquilibriumOutcome, MechanismError> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(MechanismError::InvalidParameter { name: "c", value: c, reason: "marginal cost must be >= 0" });
    }
    if demand.quantity(c) <= 0.0 {
        return Err(MechanismError::NonpositiveQuantity { c });
    }
    let p = match demand {
        DemandSpec::Linear { a, b } => 0.5 * (a / b + c),
        DemandSpec::General(_) => numeric_monopoly_price(demand, c)?,
    };
    let q = demand.quantity(p);
    Ok(EquilibriumOutcome {
        billed_price: p,
        consumer_price: p,
        quantity: q,
        provider_expenditure: p * q,
        government_outlay: 0.0,
        profit: (p - c) * q,
        regime: Regime::NoSubsidy,
    })
}

fn numeric_monopoly_price(demand: &DemandSpec, c: f64) -> Result<f64, MechanismError> {
    let (lo_hint, hi) = demand.support_hint();
    let lo = lo_hint.max(c);
    if hi <= lo {
        return Err(MechanismError::NoBracket { lo, hi });
    }
    let profit = |p: f64| (p - c) * demand.quantity(p);
    let p_star = golden_section_max(profit, lo, hi, PRICE_TOLERANCE);

    let width = hi - lo;
    let edge = 1e-7 * width.max(1.0);
    if p_star - lo < edge || hi - p_star < edge {
        return Err(MechanismError::NoBracket { lo, hi });
    }

    // Golden section resolves the peak only to ~sqrt(eps); the first-order
    // condition crosses zero transversally and can be bisected to full
    // precision.
    let foc = |p: f64| demand.quantity(p) + (p - c) * demand.slope(p);
    let half = (1e-5 * p_star.abs()).max(1e-9);
    let polished = bisect(foc, (p_star - half).max(lo), (p_star + half).min(hi), 0.0);
    Ok(polished.unwrap_or(p_star))
}

/// Whether the cap binds: either it sits below the monopoly price, or
/// enforcement is weak enough that overbilling at the cap beats the
/// unconstrained monopoly profit.
pub fn cap_binds(demand: &DemandSpec, params: &MarketParams) -> Result<bool, MechanismError> {
    let mono = solve_monopoly_price(demand, params.c)?;
    if params.pbar < mono.billed_price {
        return Ok(true);
    }
    let q_cap = demand.quantity(params.pbar);
    if q_cap <= 0.0 {
        return Ok(false);
    }
    let penalty = QuadraticPenalty { gamma: params.gamma };
    let p_cap = params.pbar + penalty.marginal_inverse(q_cap / params.alpha);
    let cap_profit = (p_cap - params.c) * q_cap - params.alpha * penalty.value(p_cap - params.pbar);
    Ok(cap_profit > mono.profit)
}

/// Price-cap equilibrium. When the cap does not bind the unconstrained
/// monopoly outcome is returned tagged [`Regime::CapSlack`].
pub fn solve_price_cap(demand: &DemandSpec, params: &MarketParams) -> Result<EquilibriumOutcome, MechanismError> {
    if !cap_binds(demand, params)? {
        let mut slack = solve_monopoly_price(demand, params.c)?;
        slack.regime = Regime::CapSlack;
        return Ok(slack);
    }
    let pbar = params.pbar;
    let q = demand.quantity(pbar);
    if q <= 0.0 {
        return Err(MechanismError::ZeroDemand { price: pbar });
    }
    let penalty = QuadraticPenalty { gamma: params.gamma };
    let overbill = penalty.marginal_inverse(q / params.alpha);
    let p = pbar + overbill;
    Ok(EquilibriumOutcome {
        billed_price: p,
        consumer_price: pbar,
        quantity: q,
        provider_expenditure: pbar * q,
        government_outlay: overbill * q,
        profit: (p - params.c) * q - params.alpha * penalty.value(overbill),
        regime: Regime::CapBinding,
    })
}

/// Ad valorem equilibrium: the consumer price is the monopoly price at the
/// effective marginal cost `c(1 - tau)`.
pub fn solve_ad_valorem(demand: &DemandSpec, params: &MarketParams) -> Result<EquilibriumOutcome, MechanismError> {
    let tau = params.tau;
    let effective = solve_monopoly_price(demand, params.c * (1.0 - tau))?;
    let p_c = effective.billed_price;
    let p = p_c / (1.0 - tau);
    let q = effective.quantity;
    Ok(EquilibriumOutcome {
        billed_price: p,
        consumer_price: p_c,
        quantity: q,
        provider_expenditure: p_c * q,
        government_outlay: tau * p * q,
        profit: (p - params.c) * q,
        regime: Regime::AdValorem,
    })
}

/// Outcome of the critical-rate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalTau {
    /// The rate at which the ad valorem consumer price equals the cap.
    Rate(f64),
    /// Even a zero effective cost leaves the consumer price above the cap.
    NoInteriorSolution,
}

impl CriticalTau {
    pub fn rate(self) -> Option<f64> {
        match self {
            CriticalTau::Rate(t) => Some(t),
            CriticalTau::NoInteriorSolution => None,
        }
    }
}

/// Critical subsidy rate `tau*` solving `p_c^adv(tau*) = pbar`, by bisection
/// on the monotone ad valorem consumer price.
pub fn critical_tau(demand: &DemandSpec, c: f64, pbar: f64) -> Result<CriticalTau, MechanismError> {
    let p_no = solve_monopoly_price(demand, c)?.billed_price;
    let tie = 1e-12 * p_no.abs().max(1.0);
    if (pbar - p_no).abs() <= tie {
        return Ok(CriticalTau::Rate(0.0));
    }
    if pbar > p_no {
        return Err(MechanismError::CapNotBinding { pbar, p_no });
    }
    let p_floor = solve_monopoly_price(demand, 0.0)?.billed_price;
    if pbar <= p_floor {
        return Ok(CriticalTau::NoInteriorSolution);
    }
    let gap = |tau: f64| -> f64 {
        match solve_monopoly_price(demand, c * (1.0 - tau)) {
            Ok(out) => out.billed_price - pbar,
            Err(_) => f64::NAN,
        }
    };
    match bisect(gap, 0.0, TAU_UPPER, TAU_TOLERANCE) {
        Some(t) if t.is_finite() => Ok(CriticalTau::Rate(t)),
        _ => Ok(CriticalTau::NoInteriorSolution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> DemandSpec {
        DemandSpec::linear(100.0, 1.0).unwrap()
    }

    fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|i| lo + step * i as f64)
            .fold((lo, f64::NEG_INFINITY), |best, p| if f(p) > best.1 { (p, f(p)) } else { best })
            .0
    }

    #[test]
    fn monopoly_linear_matches_grid() {
        let out = solve_monopoly_price(&linear(), 20.0).unwrap();
        let grid = grid_argmax(|p| (p - 20.0) * (100.0 - p), 20.0, 100.0, 1e-4);
        assert!((grid - 60.0).abs() < 1e-4);
        assert_eq!(out.billed_price, 60.0);
        assert_eq!(out.quantity, 40.0);
        assert_eq!(out.regime, Regime::NoSubsidy);
    }

    #[test]
    fn monopoly_zero_cost_symmetric() {
        let d = DemandSpec::linear(2.0, 1.0).unwrap();
        assert_eq!(solve_monopoly_price(&d, 0.0).unwrap().billed_price, 1.0);
    }

    #[test]
    fn monopoly_exponential_demand() {
        let out = solve_monopoly_price(&DemandSpec::exponential(), 2.0).unwrap();
        assert!((out.billed_price - 3.0).abs() < 1e-12, "{}", out.billed_price);
    }

    #[test]
    fn monopoly_general_path_matches_closed_form() {
        let d = linear();
        let closed = solve_monopoly_price(&d, 20.0).unwrap().billed_price;
        let numeric = solve_monopoly_price(&d.as_general(), 20.0).unwrap().billed_price;
        assert!((closed - numeric).abs() / closed < 1e-12);
    }

    #[test]
    fn lerner_identity_at_solution() {
        let d = DemandSpec::exponential();
        let out = solve_monopoly_price(&d, 1.5).unwrap();
        let p = out.billed_price;
        let eps = super::super::elasticity(&d, p).unwrap();
        assert!(((p - 1.5) / p - 1.0 / eps).abs() < 1e-10);
    }

    #[test]
    fn monopoly_errors() {
        let d = DemandSpec::linear(10.0, 1.0).unwrap();
        assert!(matches!(solve_monopoly_price(&d, 10.0), Err(MechanismError::NonpositiveQuantity { .. })));
        // Exponential demand with a support too short to contain p = c + 1.
        let short = DemandSpec::general(|p: f64| (-p).exp(), |p: f64| -(-p).exp(), (0.0, 2.5)).unwrap();
        assert!(matches!(solve_monopoly_price(&short, 2.0), Err(MechanismError::NoBracket { .. })));
    }

    #[test]
    fn cap_binds_examples() {
        let d = linear();
        let low_cap = MarketParams::new(20.0, 40.0, 0.5, 0.5, 3.0).unwrap();
        assert!(cap_binds(&d, &low_cap).unwrap());
        let strict = MarketParams::new(20.0, 70.0, 0.5, 1.0, 1e9).unwrap();
        assert!(!cap_binds(&d, &strict).unwrap());
        let weak = MarketParams::new(20.0, 70.0, 0.5, 0.01, 0.01).unwrap();
        // Numeric comparison: overbilling profit vs unconstrained profit.
        let q = 30.0;
        let ag = 0.01 * 0.01;
        let p_cap = grid_argmax(|p| (p - 20.0) * q - 0.5 * ag * (p - 70.0).powi(2), 70.0, 70.0 + 2.0 * q / ag, 1.0);
        let overbill_profit = (p_cap - 20.0) * q - 0.5 * ag * (p_cap - 70.0).powi(2);
        assert!(overbill_profit > 1600.0);
        assert!(cap_binds(&d, &weak).unwrap());
    }

    #[test]
    fn price_cap_example() {
        let d = linear();
        let params = MarketParams::new(20.0, 40.0, 0.5, 0.5, 3.0).unwrap();
        let out = solve_price_cap(&d, &params).unwrap();
        let grid = grid_argmax(|p| (p - 20.0) * 60.0 - 0.75 * (p - 40.0).powi(2), 40.0, 200.0, 1e-4);
        assert!((grid - 80.0).abs() < 1e-4);
        assert!((out.billed_price - 80.0).abs() < 1e-12);
        assert!((out.government_outlay - 2400.0).abs() < 1e-9);
        assert!((out.provider_expenditure - 2400.0).abs() < 1e-9);
        assert_eq!(out.regime, Regime::CapBinding);
        // First-order condition of the cap problem holds exactly.
        assert!((60.0 - params.enforcement() * (out.billed_price - 40.0)).abs() < 1e-12);
    }

    #[test]
    fn price_cap_enforcement_limits() {
        let d = linear();
        let strict = MarketParams::new(20.0, 40.0, 0.5, 1.0, 1e9).unwrap();
        assert!((solve_price_cap(&d, &strict).unwrap().billed_price - 40.0).abs() < 1e-6);
        let a = solve_price_cap(&d, &MarketParams::new(20.0, 40.0, 0.5, 0.5, 3.0).unwrap()).unwrap();
        let b = solve_price_cap(&d, &MarketParams::new(20.0, 40.0, 0.5, 0.5, 1.5).unwrap()).unwrap();
        assert!((b.government_outlay / a.government_outlay - 2.0).abs() < 1e-12);
    }

    #[test]
    fn price_cap_slack_is_reported() {
        let d = linear();
        let params = MarketParams::new(20.0, 70.0, 0.5, 1.0, 1e9).unwrap();
        let out = solve_price_cap(&d, &params).unwrap();
        assert_eq!(out.regime, Regime::CapSlack);
        assert_eq!(out.billed_price, 60.0);
    }

    #[test]
    fn ad_valorem_example() {
        let d = linear();
        let params = MarketParams::new(20.0, 55.0, 0.65, 0.5, 3.0).unwrap();
        let out = solve_ad_valorem(&d, &params).unwrap();
        let grid = grid_argmax(|p| (p - 20.0) * (100.0 - 0.35 * p), 20.0, 285.0, 1e-4);
        assert!((grid * 0.35 - 53.5).abs() < 1e-4);
        assert!((out.consumer_price - 53.5).abs() < 1e-12);
        assert!((out.quantity - 46.5).abs() < 1e-12);
        assert!((out.billed_price - 152.857_142_857).abs() < 1e-6);
        assert!((out.government_outlay - 4_620.107_142_857).abs() < 1e-6);
        // Billing identity p Q = E + G.
        let pq = out.billed_price * out.quantity;
        assert!((pq - out.provider_expenditure - out.government_outlay).abs() < 1e-9);
    }

    #[test]
    fn ad_valorem_limits() {
        let d = linear();
        let base = MarketParams::new(20.0, 55.0, 0.5, 0.5, 3.0).unwrap();
        let near_zero = solve_ad_valorem(&d, &base.with_tau(1e-12).unwrap()).unwrap();
        assert!((near_zero.consumer_price - 60.0).abs() < 1e-9);
        let near_one = solve_ad_valorem(&d, &base.with_tau(1.0 - 1e-12).unwrap()).unwrap();
        assert!((near_one.consumer_price - 50.0).abs() < 1e-9);
    }

    #[test]
    fn critical_tau_examples() {
        let d = linear();
        let t = critical_tau(&d, 20.0, 55.0).unwrap().rate().unwrap();
        assert!((t - 0.5).abs() < 1e-9);
        assert!((t - 2.0 * (60.0 - 55.0) / 20.0).abs() < 1e-9);
        assert_eq!(critical_tau(&d, 20.0, 60.0).unwrap(), CriticalTau::Rate(0.0));
        assert_eq!(critical_tau(&d, 20.0, 50.0).unwrap(), CriticalTau::NoInteriorSolution);
        assert!(matches!(critical_tau(&d, 20.0, 61.0), Err(MechanismError::CapNotBinding { .. })));
    }

    #[test]
    fn critical_tau_general_demand() {
        // Exponential demand: p_c^adv(tau) = 1 + c(1 - tau).
        let d = DemandSpec::exponential();
        let t = critical_tau(&d, 2.0, 2.5).unwrap().rate().unwrap();
        assert!((t - 0.25).abs() < 1e-7, "{t}");
    }
}
