use std::fmt;
use std::sync::Arc;

use super::MechanismError;

type PriceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of grid points used to spot-check monotonicity of a general curve.
const MONOTONE_CHECK_POINTS: usize = 512;

/// A strictly decreasing demand curve.
#[derive(Clone)]
pub enum DemandSpec {
    /// `D(p) = a - b p`, truncated at zero.
    Linear { a: f64, b: f64 },
    /// Any strictly decreasing curve given by its level and slope.
    General(GeneralDemand),
}

/// Callable demand with an analytic derivative and a price interval that
/// brackets every price of interest.
#[derive(Clone)]
pub struct GeneralDemand {
    evaluator: PriceFn,
    derivative: PriceFn,
    support_hint: (f64, f64),
}

impl fmt::Debug for DemandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemandSpec::Linear { a, b } => write!(f, "Linear {{ a: {a}, b: {b} }}"),
            DemandSpec::General(g) => write!(f, "General {{ support_hint: {:?} }}", g.support_hint),
        }
    }
}

impl DemandSpec {
    pub fn linear(a: f64, b: f64) -> Result<Self, MechanismError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(MechanismError::InvalidDemand(format!("intercept a={a} must be > 0")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(MechanismError::InvalidDemand(format!("slope b={b} must be > 0")));
        }
        Ok(DemandSpec::Linear { a, b })
    }

    /// Builds a general demand curve, spot-checking on a grid over
    /// `support_hint` that it is strictly decreasing wherever positive.
    pub fn general<F, G>(evaluator: F, derivative: G, support_hint: (f64, f64)) -> Result<Self, MechanismError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (lo, hi) = support_hint;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(MechanismError::InvalidDemand(format!(
                "support hint [{lo}, {hi}] must be a nonempty nonnegative interval"
            )));
        }
        let step = (hi - lo) / (MONOTONE_CHECK_POINTS - 1) as f64;
        let mut prev = evaluator(lo);
        for i in 1..MONOTONE_CHECK_POINTS {
            let p = lo + step * i as f64;
            let q = evaluator(p);
            if !q.is_finite() || q < 0.0 {
                return Err(MechanismError::InvalidDemand(format!("D({p}) = {q} is not a nonnegative number")));
            }
            if prev > 0.0 && q >= prev {
                return Err(MechanismError::InvalidDemand(format!("demand is not strictly decreasing near p={p}")));
            }
            prev = q;
        }
        Ok(DemandSpec::General(GeneralDemand {
            evaluator: Arc::new(evaluator),
            derivative: Arc::new(derivative),
            support_hint,
        }))
    }

    /// `D(p) = e^{-p}` on a generous support. Handy in tests and examples.
    pub fn exponential() -> Self {
        DemandSpec::general(|p: f64| (-p).exp(), |p: f64| -(-p).exp(), (0.0, 60.0))
            .expect("exponential demand is strictly decreasing")
    }

    pub fn quantity(&self, p: f64) -> f64 {
        match self {
            DemandSpec::Linear { a, b } => (a - b * p).max(0.0),
            DemandSpec::General(g) => (g.evaluator)(p).max(0.0),
        }
    }

    pub fn slope(&self, p: f64) -> f64 {
        match self {
            DemandSpec::Linear { b, .. } => -b,
            DemandSpec::General(g) => (g.derivative)(p),
        }
    }

    /// Price interval searched by numeric solvers. For linear demand this is
    /// `[0, a/b]`, the region where quantity is positive.
    pub fn support_hint(&self) -> (f64, f64) {
        match self {
            DemandSpec::Linear { a, b } => (0.0, a / b),
            DemandSpec::General(g) => g.support_hint,
        }
    }

    /// Re-expresses a linear curve as a general one, so the numeric solver
    /// path can be exercised on curves with known closed forms.
    pub fn as_general(&self) -> DemandSpec {
        match self {
            DemandSpec::Linear { a, b } => {
                let (a, b) = (*a, *b);
                DemandSpec::General(GeneralDemand {
                    evaluator: Arc::new(move |p| (a - b * p).max(0.0)),
                    derivative: Arc::new(move |_| -b),
                    support_hint: (0.0, a / b),
                })
            }
            general => general.clone(),
        }
    }

    /// Scales the curve horizontally and vertically: `D_s(p) = s * D(p / s)`.
    /// For linear demand this multiplies the intercept by `s` and leaves the
    /// slope unchanged, so every equilibrium price scales by `s` when costs and
    /// caps are scaled alongside.
    pub fn rescaled(&self, s: f64) -> DemandSpec {
        match self {
            DemandSpec::Linear { a, b } => DemandSpec::Linear { a: a * s, b: *b },
            DemandSpec::General(g) => {
                let eval = g.evaluator.clone();
                let deriv = g.derivative.clone();
                DemandSpec::General(GeneralDemand {
                    evaluator: Arc::new(move |p| s * eval(p / s)),
                    derivative: Arc::new(move |p| deriv(p / s)),
                    support_hint: (g.support_hint.0 * s, g.support_hint.1 * s),
                })
            }
        }
    }

    /// Multiplies quantity at every price by `m > 0`, leaving the monopoly
    /// price unchanged.
    pub fn volume_scaled(&self, m: f64) -> DemandSpec {
        match self {
            DemandSpec::Linear { a, b } => DemandSpec::Linear { a: a * m, b: b * m },
            DemandSpec::General(g) => {
                let eval = g.evaluator.clone();
                let deriv = g.derivative.clone();
                DemandSpec::General(GeneralDemand {
                    evaluator: Arc::new(move |p| m * eval(p)),
                    derivative: Arc::new(move |p| m * deriv(p)),
                    support_hint: g.support_hint,
                })
            }
        }
    }
}

/// Price elasticity `-p D'(p) / D(p)`.
pub fn elasticity(demand: &DemandSpec, p: f64) -> Result<f64, MechanismError> {
    let q = demand.quantity(p);
    if q <= 0.0 {
        return Err(MechanismError::ZeroDemand { price: p });
    }
    Ok(-p * demand.slope(p) / q)
}
