//! Rate functional `½‖v‖²`, its constraint equation and numerical upper
//! bounds on the rate of terminal-state events.

mod adjoint;
mod optimize;

pub use adjoint::{adjoint_gradient, Evaluation, RateProblem};
pub use optimize::{minimize_rate, OptimizerTrace, RateCertificate, RateOptions, RestartRecord, StageRecord};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, ModelSpec, SolverConfig};
use crate::error::{invalid, Result};
use crate::fields::{control_norm_sq, ControlPath, GridField, Trajectory};
use crate::Scalar;

/// `½∫₀ᵀ∫_D v²`.
pub fn rate_eval<T: Scalar>(v: &ControlPath<T>) -> T {
    T::lit(0.5) * control_norm_sq(v)
}

/// `sup_m ‖h(t_m) − RHS(h, v)(t_m)‖₂`, where `RHS` is the discrete
/// Duhamel map of the skeleton equation started from `spec.u0` and driven
/// by `h` itself.
pub fn admissibility_residual<T: Scalar>(h: &Trajectory<T>, v: &ControlPath<T>, spec: &ModelSpec<T>) -> Result<T> {
    let integ = Integrator::new(spec, &SolverConfig::new(v.dt, v.steps))?;
    integ.mild_residual(h, None, Some(v), T::zero())
}

/// Smooth terminal functional `Φ(u(T))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SmoothFunctional<T> {
    /// `Φ(u) = (w/2)‖u − g‖₂²`.
    Quadratic { center: GridField<T>, weight: T },
    /// `Φ(u) = ⟨g, u⟩`.
    Linear { direction: GridField<T> },
}

impl<T: Scalar> SmoothFunctional<T> {
    fn field(&self) -> &GridField<T> {
        match self {
            SmoothFunctional::Quadratic { center, .. } => center,
            SmoothFunctional::Linear { direction } => direction,
        }
    }

    pub fn value(&self, u: &[T], h: T) -> T {
        match self {
            SmoothFunctional::Quadratic { center, weight } => {
                let s: T = u.iter().zip(&center.values).map(|(&a, &b)| (a - b) * (a - b)).sum();
                T::lit(0.5) * *weight * h * s
            }
            SmoothFunctional::Linear { direction } => {
                h * u.iter().zip(&direction.values).map(|(&a, &b)| a * b).sum::<T>()
            }
        }
    }

    /// `L²` gradient on the grid: `dΦ = h Σ_j grad_j du_j`.
    pub fn gradient(&self, u: &[T]) -> Vec<T> {
        match self {
            SmoothFunctional::Quadratic { center, weight } => {
                u.iter().zip(&center.values).map(|(&a, &b)| *weight * (a - b)).collect()
            }
            SmoothFunctional::Linear { direction } => direction.values.clone(),
        }
    }
}

/// Terminal-time target of the rate minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerminalTarget<T> {
    /// Reach `{‖u(T) − g‖₂ ≤ δ}`.
    Ball { center: GridField<T>, radius: T },
    /// Leave the open ball: reach `{‖u(T) − g‖₂ ≥ δ}`.
    Exterior { center: GridField<T>, radius: T },
    /// Laplace form `Φ(u(T))/ε_ref`.
    Smooth { functional: SmoothFunctional<T>, eps_ref: T },
}

impl<T: Scalar> TerminalTarget<T> {
    pub fn center(&self) -> &GridField<T> {
        match self {
            TerminalTarget::Ball { center, .. } | TerminalTarget::Exterior { center, .. } => center,
            TerminalTarget::Smooth { functional, .. } => functional.field(),
        }
    }

    pub fn is_constraint(&self) -> bool {
        !matches!(self, TerminalTarget::Smooth { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            TerminalTarget::Ball { radius, .. } | TerminalTarget::Exterior { radius, .. } => {
                if radius.is_nan() || *radius < T::zero() {
                    return Err(invalid(format!("target radius must be non-negative, got {radius}")));
                }
            }
            TerminalTarget::Smooth { eps_ref, .. } => {
                if !(*eps_ref > T::zero()) {
                    return Err(invalid(format!("reference noise level must be positive, got {eps_ref}")));
                }
            }
        }
        Ok(())
    }

    /// Constraint violation at distance `d = ‖u(T) − g‖₂`; zero for the
    /// smooth form.
    pub fn violation(&self, d: T) -> T {
        match self {
            TerminalTarget::Ball { radius, .. } => (d - *radius).max(T::zero()),
            TerminalTarget::Exterior { radius, .. } => (*radius - d).max(T::zero()),
            TerminalTarget::Smooth { .. } => T::zero(),
        }
    }
}
