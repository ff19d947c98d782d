use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, GridField};
use crate::Scalar;

/// Cubic nonlinearity `f(u) = c₃u³ + c₂u² + c₁u + c₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cubic<T> {
    pub c3: T,
    pub c2: T,
    pub c1: T,
    pub c0: T,
}

impl<T: Scalar> Cubic<T> {
    /// `f = F'` for the double-well `F(u) = (1 − u²)²`, i.e. `4u³ − 4u`.
    pub fn double_well() -> Self {
        Self { c3: T::lit(4.0), c2: T::zero(), c1: T::lit(-4.0), c0: T::zero() }
    }

    pub fn zero() -> Self {
        Self { c3: T::zero(), c2: T::zero(), c1: T::zero(), c0: T::zero() }
    }

    pub fn is_zero(&self) -> bool {
        [self.c3, self.c2, self.c1, self.c0].iter().all(|c| *c == T::zero())
    }

    #[inline]
    pub fn eval(&self, u: T) -> T {
        ((self.c3 * u + self.c2) * u + self.c1) * u + self.c0
    }

    #[inline]
    pub fn derivative(&self, u: T) -> T {
        (T::lit(3.0) * self.c3 * u + T::lit(2.0) * self.c2) * u + self.c1
    }
}

/// Bounded Lipschitz noise coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaPreset<T> {
    /// `σ(u) = s₀`.
    Constant { s0: T },
    /// `σ(u) = s₀ / (1 + u²)`.
    BoundedRational { s0: T },
    /// `σ(u) = clamp(u, −B, B)`.
    ClippedLinear { bound: T },
}

impl<T: Scalar> SigmaPreset<T> {
    #[inline]
    pub fn eval(&self, u: T) -> T {
        match *self {
            SigmaPreset::Constant { s0 } => s0,
            SigmaPreset::BoundedRational { s0 } => s0 / (T::one() + u * u),
            SigmaPreset::ClippedLinear { bound } => u.max(-bound).min(bound),
        }
    }

    /// Derivative (one-sided value `0` at the clipping kinks).
    #[inline]
    pub fn derivative(&self, u: T) -> T {
        match *self {
            SigmaPreset::Constant { .. } => T::zero(),
            SigmaPreset::BoundedRational { s0 } => {
                let d = T::one() + u * u;
                -T::lit(2.0) * s0 * u / (d * d)
            }
            SigmaPreset::ClippedLinear { bound } => {
                if u.abs() < bound {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `S = sup |σ|`.
    pub fn sup_bound(&self) -> T {
        match *self {
            SigmaPreset::Constant { s0 } | SigmaPreset::BoundedRational { s0 } => s0.abs(),
            SigmaPreset::ClippedLinear { bound } => bound,
        }
    }

    /// Lipschitz constant `L`.
    pub fn lipschitz(&self) -> T {
        match *self {
            SigmaPreset::Constant { .. } => T::zero(),
            // max of 2|u|/(1+u²)² is attained at u² = 1/3
            SigmaPreset::BoundedRational { s0 } => s0.abs() * T::lit(3.0) * T::lit(3.0).sqrt() / T::lit(8.0),
            SigmaPreset::ClippedLinear { .. } => T::one(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound() == T::zero()
    }
}

/// Coefficients, noise preset and initial datum of one model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub drift: Cubic<T>,
    pub sigma: SigmaPreset<T>,
    pub u0: GridField<T>,
    /// Test-only escape hatch admitting `c₃ = 0` (linear oracles).
    pub allow_degenerate_drift: bool,
}

impl<T: Scalar> ModelSpec<T> {
    /// Double-well drift, `σ(u) = 1/(1+u²)`, `u₀ = 0.1 cos(x₁)`.
    pub fn default_on(grid: Grid) -> Self {
        Self {
            drift: Cubic::double_well(),
            sigma: SigmaPreset::BoundedRational { s0: T::one() },
            u0: GridField::from_fn(grid, |x: &[T]| T::lit(0.1) * x[0].cos()),
            allow_degenerate_drift: false,
        }
    }

    /// `f ≡ 0` with the given noise coefficient, for linear oracles.
    pub fn linear(u0: GridField<T>, sigma: SigmaPreset<T>) -> Self {
        Self { drift: Cubic::zero(), sigma, u0, allow_degenerate_drift: true }
    }

    pub fn with_u0(mut self, u0: GridField<T>) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_sigma(mut self, sigma: SigmaPreset<T>) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn grid(&self) -> Grid {
        self.u0.grid
    }

    pub fn f_eval(&self, u: T) -> T {
        self.drift.eval(u)
    }

    pub fn sigma_eval(&self, u: T) -> T {
        self.sigma.eval(u)
    }

    pub fn f_field(&self, g: &GridField<T>) -> GridField<T> {
        g.map(|u| self.drift.eval(u))
    }

    pub fn sigma_field(&self, g: &GridField<T>) -> GridField<T> {
        g.map(|u| self.sigma.eval(u))
    }

    /// Checks (H1) and (H2) and finiteness of the initial datum.
    pub fn validate(&self) -> Result<()> {
        let d = &self.drift;
        if [d.c3, d.c2, d.c1, d.c0].iter().any(|c| !c.is_finite()) {
            return Err(Error::Hypothesis { tag: "(H1)", detail: "non-finite drift coefficient".into() });
        }
        if !(d.c3 > T::zero()) && !self.allow_degenerate_drift {
            return Err(Error::Hypothesis {
                tag: "(H1)",
                detail: format!("f must be cubic with positive leading coefficient, got c3 = {}", d.c3),
            });
        }
        let (s, l) = (self.sigma.sup_bound(), self.sigma.lipschitz());
        if !s.is_finite() || !l.is_finite() || s < T::zero() {
            return Err(Error::Hypothesis {
                tag: "(H2)",
                detail: format!("sigma must be bounded and Lipschitz (S = {s}, L = {l})"),
            });
        }
        if self.u0.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Hypothesis { tag: "(H3)", detail: "u0 must be finite".into() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_values() {
        let f = Cubic::<f64>::double_well();
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(2.0), 24.0);
        assert_eq!(f.derivative(0.0), -4.0);
    }

    #[test]
    fn sigma_bounds_hold() {
        let presets = [
            SigmaPreset::Constant { s0: -0.7 },
            SigmaPreset::BoundedRational { s0: 1.3 },
            SigmaPreset::ClippedLinear { bound: 0.5 },
        ];
        let us: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.01).collect();
        for s in presets {
            for w in us.windows(2) {
                assert!(s.eval(w[0]).abs() <= s.sup_bound() + 1e-15);
                let slope = (s.eval(w[1]) - s.eval(w[0])).abs() / (w[1] - w[0]);
                assert!(slope <= s.lipschitz() + 1e-9, "{s:?}: {slope}");
            }
        }
    }

    #[test]
    fn validation_names_hypothesis() {
        let grid = Grid::line(8);
        let mut spec = ModelSpec::<f64>::default_on(grid);
        assert!(spec.validate().is_ok());
        spec.drift.c3 = 0.0;
        match spec.validate() {
            Err(Error::Hypothesis { tag, .. }) => assert_eq!(tag, "(H1)"),
            other => panic!("{other:?}"),
        }
        spec.allow_degenerate_drift = true;
        assert!(spec.validate().is_ok());
        let bad = ModelSpec::<f64>::default_on(grid).with_sigma(SigmaPreset::Constant { s0: f64::INFINITY });
        assert!(matches!(bad.validate(), Err(Error::Hypothesis { tag: "(H2)", .. })));
    }
}
