mod sealed {
    pub trait Sealed {}
}

/// Convex audit penalty on the overbilling deviation. Only the quadratic
/// form is provided; the trait is sealed so solvers can rely on closed forms.
pub trait PenaltyFunction: sealed::Sealed + Send + Sync {
    fn value(&self, deviation: f64) -> f64;
    fn marginal(&self, deviation: f64) -> f64;
    /// Inverse of the marginal penalty on `[0, inf)`.
    fn marginal_inverse(&self, marginal: f64) -> f64;
}

/// `Phi(d) = gamma / 2 * d^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPenalty {
    pub gamma: f64,
}

impl sealed::Sealed for QuadraticPenalty {}

impl PenaltyFunction for QuadraticPenalty {
    fn value(&self, deviation: f64) -> f64 {
        0.5 * self.gamma * deviation * deviation
    }

    fn marginal(&self, deviation: f64) -> f64 {
        self.gamma * deviation
    }

    fn marginal_inverse(&self, marginal: f64) -> f64 {
        marginal / self.gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_marginal_inverts() {
        let phi = QuadraticPenalty { gamma: 3.0 };
        assert_eq!(phi.value(0.0), 0.0);
        assert_eq!(phi.marginal(0.0), 0.0);
        let d = phi.marginal_inverse(7.5);
        assert!((phi.marginal(d) - 7.5).abs() < 1e-15);
    }
}
