use super::TerminalTarget;
use crate::dynamics::{Integrator, ModelSpec, SolverConfig};
use crate::error::{shape, Result};
use crate::fields::{ControlPath, GridField};
use crate::Scalar;

/// Penalized objective
/// `J(v) = ½‖v‖² + P(u^v(T))`, with
/// `P = (2μ)^{-1} max(0, ‖u(T)−g‖₂ − δ)²` for a ball,
/// `P = (2μ)^{-1} max(0, δ − ‖u(T)−g‖₂)²` for its exterior and
/// `P = Φ(u(T))/ε_ref` for a smooth functional.
#[derive(Clone, Debug)]
pub struct RateProblem<T> {
    integrator: Integrator<T>,
    target: TerminalTarget<T>,
    center_coeffs: Vec<T>,
    mu: T,
}

/// Value of the objective and its parts at one control.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub objective: T,
    pub cost: T,
    pub penalty: T,
    /// `‖u(T) − g‖₂`.
    pub distance: T,
    pub violation: T,
    pub endpoint: GridField<T>,
}

impl<T: Scalar> RateProblem<T> {
    pub fn new(spec: &ModelSpec<T>, config: &SolverConfig<T>, target: &TerminalTarget<T>, mu: T) -> Result<Self> {
        target.validate()?;
        if !(mu > T::zero()) {
            return Err(crate::error::invalid(format!("penalty parameter must be positive, got {mu}")));
        }
        let integrator = Integrator::new(spec, &config.recording(1))?;
        if target.center().grid != spec.grid() {
            return Err(shape("target lives on a different grid"));
        }
        let mut center_coeffs = vec![T::zero(); spec.grid().len()];
        integrator.basis().analyze(&target.center().values, &mut center_coeffs);
        Ok(Self { integrator, target: target.clone(), center_coeffs, mu })
    }

    pub fn with_mu(mut self, mu: T) -> Self {
        self.mu = mu;
        self
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn target(&self) -> &TerminalTarget<T> {
        &self.target
    }

    pub fn integrator(&self) -> &Integrator<T> {
        &self.integrator
    }

    fn check(&self, v: &ControlPath<T>) -> Result<()> {
        let c = self.integrator.config();
        if v.grid != self.integrator.grid() || v.steps != c.steps || v.dt != c.dt {
            return Err(shape("control does not match the problem grid"));
        }
        Ok(())
    }

    /// Penalty value and its derivative with respect to the terminal
    /// coefficients.
    fn terminal(&self, a: &[T], u: &[T], want_grad: bool) -> (T, T, Vec<T>) {
        let diff: Vec<T> = a.iter().zip(&self.center_coeffs).map(|(&x, &g)| x - g).collect();
        let d = diff.iter().map(|&x| x * x).sum::<T>().sqrt();
        let mut grad = Vec::new();
        let penalty = match &self.target {
            TerminalTarget::Ball { radius, .. } | TerminalTarget::Exterior { radius, .. } => {
                let gap = match self.target {
                    TerminalTarget::Ball { .. } => d - *radius,
                    _ => *radius - d,
                };
                if gap > T::zero() {
                    if want_grad && d > T::zero() {
                        // d(gap)/da = ±(a − ĝ)/d
                        let sign = if matches!(self.target, TerminalTarget::Ball { .. }) { T::one() } else { -T::one() };
                        let c = sign * gap / (self.mu * d);
                        grad = diff.iter().map(|&x| c * x).collect();
                    }
                    gap * gap / (T::lit(2.0) * self.mu)
                } else {
                    T::zero()
                }
            }
            TerminalTarget::Smooth { functional, eps_ref } => {
                if want_grad {
                    let g = functional.gradient(u);
                    let mut coeffs = vec![T::zero(); g.len()];
                    self.integrator.basis().analyze(&g, &mut coeffs);
                    grad = coeffs.into_iter().map(|c| c / *eps_ref).collect();
                }
                functional.value(u, self.integrator.grid().cell_volume()) / *eps_ref
            }
        };
        if want_grad && grad.is_empty() {
            grad = vec![T::zero(); a.len()];
        }
        (penalty, d, grad)
    }

    pub fn evaluate(&self, v: &ControlPath<T>) -> Result<Evaluation<T>> {
        self.check(v)?;
        let endpoint = self.integrator.endpoint(None, Some(v), T::zero())?;
        let mut a = vec![T::zero(); endpoint.len()];
        self.integrator.basis().analyze(&endpoint.values, &mut a);
        let (penalty, distance, _) = self.terminal(&a, &endpoint.values, false);
        let cost = super::rate_eval(v);
        Ok(Evaluation {
            objective: cost + penalty,
            cost,
            penalty,
            distance,
            violation: self.target.violation(distance),
            endpoint,
        })
    }

    /// Objective and its gradient in the quadrature inner product
    /// `⟨v, w⟩ = Δt·h·Σ v w`, by the discrete adjoint of the scheme.
    pub fn gradient(&self, v: &ControlPath<T>) -> Result<(T, ControlPath<T>)> {
        self.check(v)?;
        let integ = &self.integrator;
        let (traj, a_final) = integ.run(None, Some(v), T::zero())?;
        let u_final = traj.states.last().expect("non-empty trajectory");
        let (penalty, _, mut lam) = self.terminal(&a_final, u_final, true);
        let objective = super::rate_eval(v) + penalty;

        let spec = integ.spec();
        let basis = integ.basis();
        let (decay, phi, mu) = (integ.decay(), integ.phi(), basis.mu());
        let len = lam.len();
        let dt = integ.config().dt;
        let drift_on = !spec.drift.is_zero();
        let mut grad = v.clone();
        grad.bound = None;
        let mut psi = vec![T::zero(); len];
        let mut mu_psi = vec![T::zero(); len];
        let mut b_psi = vec![T::zero(); len];
        let mut b_mu_psi = vec![T::zero(); len];
        let mut mixed = vec![T::zero(); len];
        let mut back = vec![T::zero(); len];
        for m in (0..v.steps).rev() {
            let u = &traj.states[m];
            let vm = v.slice(m);
            for k in 0..len {
                psi[k] = phi[k] * lam[k];
                mu_psi[k] = mu[k] * psi[k];
            }
            basis.synthesize(&psi, &mut b_psi);
            let gm = &mut grad.values[m * len..(m + 1) * len];
            for j in 0..len {
                gm[j] = gm[j] + spec.sigma.eval(u[j]) * b_psi[j] / dt;
            }
            if drift_on {
                basis.synthesize(&mu_psi, &mut b_mu_psi);
            }
            for j in 0..len {
                let mut s = spec.sigma.derivative(u[j]) * vm[j] * b_psi[j];
                if drift_on {
                    s = s - spec.drift.derivative(u[j]) * b_mu_psi[j];
                }
                mixed[j] = s;
            }
            basis.analyze(&mixed, &mut back);
            for k in 0..len {
                lam[k] = decay[k] * lam[k] + back[k];
            }
        }
        Ok((objective, grad))
    }
}

/// Gradient of the penalized objective at `v` for the given target and
/// penalty parameter `μ`; the solver grid is taken from `v`.
pub fn adjoint_gradient<T: Scalar>(
    v: &ControlPath<T>,
    target: &TerminalTarget<T>,
    mu: T,
    spec: &ModelSpec<T>,
) -> Result<ControlPath<T>> {
    let problem = RateProblem::new(spec, &SolverConfig::new(v.dt, v.steps), target, mu)?;
    Ok(problem.gradient(v)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_skeleton;
    use crate::fields::Grid;
    use crate::rate::SmoothFunctional;

    #[test]
    fn zero_control_at_reachable_target_is_stationary() {
        let grid = Grid::line(16);
        let spec = ModelSpec::default_on(grid);
        let cfg = SolverConfig::new(0.025, 20);
        let v = ControlPath::zeros(grid, cfg.dt, cfg.steps);
        let g = solve_skeleton(&v, &spec, &cfg).unwrap().trajectory.last();
        let target = TerminalTarget::Ball { center: g, radius: 0.0 };
        let grad = adjoint_gradient(&v, &target, 1.0, &spec).unwrap();
        assert!(grad.values.iter().all(|x: &f64| x.abs() <= 1e-10));
    }

    #[test]
    fn cost_gradient_is_identity() {
        let grid = Grid::line(8);
        let spec = ModelSpec::default_on(grid);
        let v = ControlPath::from_fn(grid, 0.02, 10, |t: f64, x: &[f64]| t + x[0].sin());
        let zero = SmoothFunctional::Linear { direction: GridField::zeros(grid) };
        let target = TerminalTarget::Smooth { functional: zero, eps_ref: 1.0 };
        let grad = adjoint_gradient(&v, &target, 1.0, &spec).unwrap();
        assert_eq!(grad.values, v.values);
    }

    #[test]
    fn matches_central_differences() {
        let grid = Grid::line(16);
        let spec = ModelSpec::default_on(grid);
        let cfg = SolverConfig::new(0.025, 20);
        let center = GridField::from_fn(grid, |x: &[f64]| 0.5 * (2.0 * x[0]).cos());
        let target = TerminalTarget::Ball { center, radius: 0.1 };
        let problem = RateProblem::new(&spec, &cfg, &target, 0.5).unwrap();
        let v = ControlPath::from_fn(grid, cfg.dt, cfg.steps, |t: f64, x: &[f64]| 0.3 * (x[0] + 3.0 * t).sin());
        let d = ControlPath::from_fn(grid, cfg.dt, cfg.steps, |t: f64, x: &[f64]| (2.0 * x[0] * t).cos() - 0.2);
        let (_, grad) = problem.gradient(&v).unwrap();
        let tau = 1e-5;
        let jp = problem.evaluate(&v.add(&d.scale(tau)).unwrap()).unwrap().objective;
        let jm = problem.evaluate(&v.sub(&d.scale(tau)).unwrap()).unwrap().objective;
        let fd = (jp - jm) / (2.0 * tau);
        let an = grad.dot(&d).unwrap();
        assert!(((an - fd) / an).abs() < 1e-6, "{an} vs {fd}");
    }
}
