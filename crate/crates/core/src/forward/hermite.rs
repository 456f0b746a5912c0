//! Cubic Hermite dense output over one step.

use crate::model::Vector;

/// `x̂(τ)` on `τ ∈ [0, 1]` matching values and derivatives at both ends.
///
/// Derivatives are stored in the scaled variable, i.e. `h·x'`.
#[derive(Clone, Debug)]
pub struct Hermite {
    pub x0: Vector,
    pub d0: Vector,
    pub x1: Vector,
    pub d1: Vector,
}

impl Hermite {
    /// Builds the interpolant from `x(k)`, `x'(k)`, the last stage `x_s` and
    /// its derivative, for a step of length `h`.
    pub fn new(x0: Vector, f0: &Vector, x1: Vector, f1: &Vector, h: f64) -> Self {
        Hermite {
            x0,
            d0: f0 * h,
            x1,
            d1: f1 * h,
        }
    }

    pub fn eval(&self, tau: f64) -> Vector {
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        &self.x0 * h00 + &self.d0 * h10 + &self.x1 * h01 + &self.d1 * h11
    }

    /// `dx̂/dτ`.
    pub fn derivative(&self, tau: f64) -> Vector {
        let t2 = tau * tau;
        let h00 = 6.0 * t2 - 6.0 * tau;
        let h10 = 3.0 * t2 - 4.0 * tau + 1.0;
        let h01 = -6.0 * t2 + 6.0 * tau;
        let h11 = 3.0 * t2 - 2.0 * tau;
        &self.x0 * h00 + &self.d0 * h10 + &self.x1 * h01 + &self.d1 * h11
    }
}
