use serde::{Deserialize, Serialize};

use super::model::ModelSpec;
use crate::error::{invalid, shape, Error, Result};
use crate::fields::{ControlPath, Grid, GridField, Trajectory, TrajectoryMeta};
use crate::noise::NoisePath;
use crate::spectral::CosineBasis;
use crate::Scalar;

/// Tolerance on the discrete mild-equation residual.
pub const TOL_MILD: f64 = 1e-6;

/// Time stepping parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub dt: T,
    pub steps: usize,
    /// `C` in the explicit-drift bound `max_k φ_k μ_k · max_x |f'(u)| ≤ C`.
    pub stability_constant: T,
    /// Integration aborts once `‖u‖_∞` exceeds this.
    pub blowup_threshold: T,
    /// Store every `record_every`-th state.
    pub record_every: usize,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(dt: T, steps: usize) -> Self {
        Self {
            dt,
            steps,
            stability_constant: T::one(),
            blowup_threshold: T::lit(1e6),
            record_every: 1,
        }
    }

    /// `Δt = 1e-4`, `T = 0.5`.
    pub fn desk_default() -> Self {
        Self::new(T::lit(1e-4), 5000)
    }

    pub fn final_time(&self) -> T {
        T::from_usize_lossy(self.steps) * self.dt
    }

    pub fn recording(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(invalid("need at least one time step"));
        }
        if self.record_every == 0 || !self.steps.is_multiple_of(self.record_every) {
            return Err(invalid(format!(
                "record interval {} must divide {} steps",
                self.record_every, self.steps
            )));
        }
        Ok(())
    }
}

/// Spectral exponential-Euler integrator for
/// `du = −Δ(Δu − f(u)) dt + σ(u) v dt + √ε σ(u) dW`.
///
/// In coefficients, one step reads
/// `a⁺ = E a + φ∘(−μ∘A f(u) + A(σ(u) v)) + √ε E∘P(σ(u) ΔW)`
/// with `E_k = e^{−λ_k Δt}`, `φ_k = (1 − E_k)/λ_k` (`φ_0 = Δt`), `A` the
/// quadrature analysis map and `P` the unweighted projection that treats
/// each cell increment as a point mass.
#[derive(Clone, Debug)]
pub struct Integrator<T> {
    basis: CosineBasis<T>,
    spec: ModelSpec<T>,
    config: SolverConfig<T>,
    decay: Vec<T>,
    phi: Vec<T>,
    drift_gain: T,
}

/// Reusable buffers for one step.
pub(crate) struct Workspace<T> {
    pub(crate) forcing: Vec<T>,
    pub(crate) spec_drift: Vec<T>,
    pub(crate) spec_ctrl: Vec<T>,
    pub(crate) spec_noise: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            forcing: vec![T::zero(); len],
            spec_drift: vec![T::zero(); len],
            spec_ctrl: vec![T::zero(); len],
            spec_noise: vec![T::zero(); len],
        }
    }
}

impl<T: Scalar> Integrator<T> {
    pub fn new(spec: &ModelSpec<T>, config: &SolverConfig<T>) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let basis = CosineBasis::new(spec.grid());
        let dt = config.dt;
        let decay: Vec<T> = basis.lambda().iter().map(|&l: &T| (-l * dt).exp()).collect();
        let phi: Vec<T> = basis
            .lambda()
            .iter()
            .map(|&l| if l == T::zero() { dt } else { -(-l * dt).exp_m1() / l })
            .collect();
        let drift_gain = phi.iter().zip(basis.mu()).map(|(&p, &m)| p * m).fold(T::zero(), T::max);
        Ok(Self { basis, spec: spec.clone(), config: *config, decay, phi, drift_gain })
    }

    pub fn grid(&self) -> Grid {
        self.basis.grid()
    }

    pub fn basis(&self) -> &CosineBasis<T> {
        &self.basis
    }

    pub fn spec(&self) -> &ModelSpec<T> {
        &self.spec
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    pub fn decay(&self) -> &[T] {
        &self.decay
    }

    pub fn phi(&self) -> &[T] {
        &self.phi
    }

    /// `max_k φ_k μ_k`, the gain of the explicit drift term.
    pub fn drift_gain(&self) -> T {
        self.drift_gain
    }

    /// Largest `max_x |f'(u)|` the stability bound admits.
    pub fn max_admissible_slope(&self) -> T {
        self.config.stability_constant / self.drift_gain
    }

    fn check_state(&self, step: usize, u: &[T]) -> Result<()> {
        let mut sup = T::zero();
        for &x in u {
            if !x.is_finite() {
                return Err(Error::BlowUp { step, reason: "non-finite state".into() });
            }
            sup = sup.max(x.abs());
        }
        if sup > self.config.blowup_threshold {
            return Err(Error::BlowUp {
                step,
                reason: format!("‖u‖∞ = {sup:e} exceeds {:e}", self.config.blowup_threshold),
            });
        }
        if !self.spec.drift.is_zero() {
            let slope = u.iter().fold(T::zero(), |m, &x| m.max(self.spec.drift.derivative(x).abs()));
            if slope * self.drift_gain > self.config.stability_constant {
                return Err(Error::Stability {
                    step,
                    detail: format!(
                        "max|f'(u)| = {slope:e} with gain {:e} exceeds C = {}",
                        self.drift_gain, self.config.stability_constant
                    ),
                });
            }
        }
        Ok(())
    }

    /// Forcing coefficients of one step from the grid state `u`:
    /// `drift_k = −μ_k (A f(u))_k`, `ctrl_k = (A σ(u)v)_k`,
    /// `noise_k = (P σ(u)ΔW)_k`. Absent terms are left untouched and
    /// reported through the returned flags.
    pub(crate) fn forcing(
        &self,
        u: &[T],
        dw: Option<&[T]>,
        v: Option<&[T]>,
        ws: &mut Workspace<T>,
    ) -> (bool, bool, bool) {
        let spec = &self.spec;
        let has_drift = !spec.drift.is_zero();
        if has_drift {
            ws.forcing.iter_mut().zip(u).for_each(|(f, &x)| *f = spec.drift.eval(x));
            self.basis.analyze(&ws.forcing, &mut ws.spec_drift);
            ws.spec_drift.iter_mut().zip(self.basis.mu()).for_each(|(d, &m)| *d = -m * *d);
        }
        let sigma_zero = spec.sigma.is_zero();
        let has_ctrl = v.is_some() && !sigma_zero;
        if let (true, Some(v)) = (has_ctrl, v) {
            ws.forcing.iter_mut().zip(u).zip(v).for_each(|((f, &x), &c)| *f = spec.sigma.eval(x) * c);
            self.basis.analyze(&ws.forcing, &mut ws.spec_ctrl);
        }
        let has_noise = dw.is_some() && !sigma_zero;
        if let (true, Some(dw)) = (has_noise, dw) {
            ws.forcing.iter_mut().zip(u).zip(dw).for_each(|((f, &x), &w)| *f = spec.sigma.eval(x) * w);
            self.basis.project_sum(&ws.forcing, &mut ws.spec_noise);
        }
        (has_drift, has_ctrl, has_noise)
    }

    /// Advances coefficients `a` (with grid values `u = B a`) by one step.
    pub(crate) fn advance(
        &self,
        a: &mut [T],
        u: &[T],
        dw: Option<&[T]>,
        v: Option<&[T]>,
        eps: T,
        ws: &mut Workspace<T>,
    ) {
        let noise = if eps > T::zero() { dw } else { None };
        let (has_drift, has_ctrl, has_noise) = self.forcing(u, noise, v, ws);
        let root = eps.sqrt();
        for k in 0..a.len() {
            let mut next = self.decay[k] * a[k];
            if has_drift || has_ctrl {
                let mut g = T::zero();
                if has_drift {
                    g = g + ws.spec_drift[k];
                }
                if has_ctrl {
                    g = g + ws.spec_ctrl[k];
                }
                next = next + self.phi[k] * g;
            }
            if has_noise {
                next = next + self.decay[k] * root * ws.spec_noise[k];
            }
            a[k] = next;
        }
    }

    /// One step on grid values; see the type-level documentation.
    pub fn step(&self, state: &GridField<T>, dw: Option<&[T]>, v: Option<&[T]>, eps: T) -> Result<GridField<T>> {
        let len = self.grid().len();
        if state.grid != self.grid()
            || dw.is_some_and(|d| d.len() != len)
            || v.is_some_and(|c| c.len() != len)
        {
            return Err(shape("step inputs do not match the integrator grid"));
        }
        if eps.is_nan() || eps < T::zero() {
            return Err(invalid(format!("noise scale must be non-negative, got {eps}")));
        }
        self.check_state(0, &state.values)?;
        let mut a = vec![T::zero(); len];
        self.basis.analyze(&state.values, &mut a);
        let mut ws = Workspace::new(len);
        self.advance(&mut a, &state.values, dw, v, eps, &mut ws);
        let mut out = vec![T::zero(); len];
        self.basis.synthesize(&a, &mut out);
        self.check_state(1, &out)?;
        Ok(GridField { grid: self.grid(), values: out })
    }

    fn check_inputs(&self, w: Option<&NoisePath<T>>, v: Option<&ControlPath<T>>) -> Result<()> {
        let (grid, steps, dt) = (self.grid(), self.config.steps, self.config.dt);
        if let Some(w) = w {
            if w.grid != grid || w.steps != steps || w.dt != dt {
                return Err(shape("noise path does not match the solver grid"));
            }
        }
        if let Some(v) = v {
            if v.grid != grid || v.steps != steps || v.dt != dt {
                return Err(shape("control does not match the solver grid"));
            }
        }
        Ok(())
    }

    /// Integrates from `spec.u0`, returning the recorded trajectory and the
    /// final coefficients.
    pub fn run(
        &self,
        w: Option<&NoisePath<T>>,
        v: Option<&ControlPath<T>>,
        eps: T,
    ) -> Result<(Trajectory<T>, Vec<T>)> {
        self.check_inputs(w, v)?;
        if eps.is_nan() || eps < T::zero() {
            return Err(invalid(format!("noise scale must be non-negative, got {eps}")));
        }
        let len = self.grid().len();
        let every = self.config.record_every;
        let mut a = vec![T::zero(); len];
        let mut u = self.spec.u0.values.clone();
        self.check_state(0, &u)?;
        self.basis.analyze(&u, &mut a);
        let mut ws = Workspace::new(len);
        let mut states = Vec::with_capacity(self.config.steps / every + 1);
        states.push(u.clone());
        for m in 0..self.config.steps {
            self.advance(&mut a, &u, w.map(|w| w.slice(m)), v.map(|v| v.slice(m)), eps, &mut ws);
            self.basis.synthesize(&a, &mut u);
            self.check_state(m + 1, &u)?;
            if (m + 1) % every == 0 {
                states.push(u.clone());
            }
        }
        let dt = self.config.dt * T::from_usize_lossy(every);
        let meta = TrajectoryMeta { epsilon: eps.as_f64(), ..Default::default() };
        Ok((Trajectory { grid: self.grid(), dt, states, meta }, a))
    }

    /// Integrates with prescribed driving increments at unit noise scale,
    /// i.e. `σ(u)·ΔZ` with `ΔZ` taken verbatim from `driving`.
    pub fn run_noise(&self, driving: &NoisePath<T>) -> Result<(Trajectory<T>, Vec<T>)> {
        self.run(Some(driving), None, T::one())
    }

    /// Terminal state only, without storing the path.
    pub fn endpoint(&self, w: Option<&NoisePath<T>>, v: Option<&ControlPath<T>>, eps: T) -> Result<GridField<T>> {
        let quiet = Self { config: SolverConfig { record_every: self.config.steps, ..self.config }, ..self.clone() };
        let (traj, _) = quiet.run(w, v, eps)?;
        Ok(traj.last())
    }

    /// Residual of the stored path against the discrete Duhamel formula
    /// started from `spec.u0`:
    /// `a_m = e^{−λ t_m} a_0 + Σ_{i<m} e^{−λ(t_m − t_{i+1})}[φ∘(drift + ctrl)(u_i) + √ε E∘noise(u_i)]`
    /// with the forcing evaluated on the stored states `u_i`. Returns
    /// `sup_m ‖u(t_m) − a_m‖₂`; the final time is additionally summed term
    /// by term with explicit exponentials.
    pub fn mild_residual(
        &self,
        traj: &Trajectory<T>,
        w: Option<&NoisePath<T>>,
        v: Option<&ControlPath<T>>,
        eps: T,
    ) -> Result<T> {
        self.check_inputs(w, v)?;
        if traj.grid != self.grid() || traj.dt != self.config.dt || traj.steps() != self.config.steps {
            return Err(shape("trajectory must be stored at every solver step"));
        }
        let len = self.grid().len();
        let steps = self.config.steps;
        let dt = self.config.dt;
        let lambda = self.basis.lambda();
        let noise_on = eps > T::zero();
        let root = eps.sqrt();
        let final_time = T::from_usize_lossy(steps) * dt;
        let mut ws = Workspace::new(len);
        let mut a0 = vec![T::zero(); len];
        self.basis.analyze(&self.spec.u0.values, &mut a0);
        let mut rec = a0.clone();
        let mut direct: Vec<T> = (0..len).map(|k| (-lambda[k] * final_time).exp() * a0[k]).collect();
        let mut stored = vec![T::zero(); len];
        let l2 = |stored: &[T], model: &[T]| stored.iter().zip(model).map(|(&s, &c)| (s - c) * (s - c)).sum::<T>().sqrt();
        self.basis.analyze(&traj.states[0], &mut stored);
        let mut worst = l2(&stored, &a0);
        for i in 0..steps {
            let dw = if noise_on { w.map(|w| w.slice(i)) } else { None };
            let (hd, hc, hn) = self.forcing(&traj.states[i], dw, v.map(|v| v.slice(i)), &mut ws);
            let lag = final_time - T::from_usize_lossy(i + 1) * dt;
            for k in 0..len {
                let mut g = T::zero();
                if hd {
                    g = g + ws.spec_drift[k];
                }
                if hc {
                    g = g + ws.spec_ctrl[k];
                }
                let mut term = self.phi[k] * g;
                if hn {
                    term = term + self.decay[k] * root * ws.spec_noise[k];
                }
                rec[k] = self.decay[k] * rec[k] + term;
                direct[k] = direct[k] + (-lambda[k] * lag).exp() * term;
            }
            self.basis.analyze(&traj.states[i + 1], &mut stored);
            worst = worst.max(l2(&stored, &rec));
        }
        Ok(worst.max(l2(&stored, &direct)))
    }
}

/// One exponential-Euler step of the controlled stochastic equation.
pub fn step<T: Scalar>(
    state: &GridField<T>,
    dw: Option<&[T]>,
    v: Option<&[T]>,
    eps: T,
    dt: T,
    spec: &ModelSpec<T>,
) -> Result<GridField<T>> {
    Integrator::new(&spec.clone().with_u0(state.clone()), &SolverConfig::new(dt, 1))?.step(state, dw, v, eps)
}

/// Skeleton trajectory together with its mild-equation residual.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSolution<T> {
    pub trajectory: Trajectory<T>,
    pub mild_residual: T,
    pub within_tolerance: bool,
}

/// Solves the zero-noise controlled equation from `spec.u0`.
///
/// The trajectory is stored at every step so that the Duhamel residual can
/// be checked against [`TOL_MILD`].
pub fn solve_skeleton<T: Scalar>(
    v: &ControlPath<T>,
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SkeletonSolution<T>> {
    let integrator = Integrator::new(spec, &config.recording(1))?;
    let (mut trajectory, _) = integrator.run(None, Some(v), T::zero())?;
    let mild_residual = integrator.mild_residual(&trajectory, None, Some(v), T::zero())?;
    trajectory.meta.control_id = Some("skeleton".into());
    Ok(SkeletonSolution { trajectory, mild_residual, within_tolerance: mild_residual.as_f64() <= TOL_MILD })
}

/// Solves the stochastic equation (controlled when `v` is given).
pub fn solve_stochastic<T: Scalar>(
    w: &NoisePath<T>,
    v: Option<&ControlPath<T>>,
    eps: T,
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
) -> Result<Trajectory<T>> {
    let integrator = Integrator::new(spec, config)?;
    Ok(integrator.run(Some(w), v, eps)?.0)
}

/// `sup_m (1/R) Σ_r ‖u_r(t_m)‖_p^q` over an ensemble sharing one time grid.
pub fn moment_diagnostic<T: Scalar>(trajs: &[Trajectory<T>], p: T, q: T) -> Result<f64> {
    let first = trajs.first().ok_or_else(|| invalid("empty ensemble"))?;
    if trajs.iter().any(|t| !t.same_layout(first)) {
        return Err(shape("ensemble members live on different grids"));
    }
    let mut sup = 0.0_f64;
    for m in 0..=first.steps() {
        let mut acc = Vec::with_capacity(trajs.len());
        for t in trajs {
            acc.push(crate::fields::lp_norm(&t.field(m), p)?.as_f64().powf(q.as_f64()));
        }
        sup = sup.max(crate::stats::pairwise_sum(&acc) / trajs.len() as f64);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SigmaPreset;
    use crate::noise::{sample_sheet, SeedSpec, SheetConfig};

    fn quiet(u0: GridField<f64>) -> ModelSpec<f64> {
        ModelSpec::linear(u0, SigmaPreset::Constant { s0: 0.0 })
    }

    #[test]
    fn constant_state_is_equilibrium() {
        let grid = Grid::line(32);
        let spec = ModelSpec::<f64>::default_on(grid).with_u0(GridField::constant(grid, 0.3));
        let next = step(&spec.u0, None, None, 0.0, 1e-3, &spec).unwrap();
        for v in next.values {
            assert!((v - 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenmode_decays_exactly() {
        let grid = Grid::line(16);
        let u0 = GridField::from_fn(grid, |x: &[f64]| x[0].cos());
        let cfg = SolverConfig::new(1e-3, 500);
        let traj = Integrator::new(&quiet(u0.clone()), &cfg).unwrap().run(None, None, 0.0).unwrap().0;
        let decay = (-0.5f64).exp();
        for (a, b) in traj.last().values.iter().zip(&u0.values) {
            assert!((a - decay * b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_stays_zero() {
        let grid = Grid::line(16);
        let spec = ModelSpec::default_on(grid).with_u0(GridField::zeros(grid));
        let v = ControlPath::zeros(grid, 1e-3, 50);
        let sol = solve_skeleton(&v, &spec, &SolverConfig::new(1e-3, 50)).unwrap();
        assert!(sol.trajectory.states.iter().flatten().all(|&x| x == 0.0));
        assert!(sol.within_tolerance);
    }

    #[test]
    fn skeleton_keeps_mean_and_passes_residual() {
        let grid = Grid::line(32);
        let spec = ModelSpec::default_on(grid).with_u0(GridField::from_fn(grid, |x: &[f64]| 0.2 + 0.5 * x[0].cos()));
        let cfg = SolverConfig::new(1e-3, 200);
        let v = ControlPath::zeros(grid, cfg.dt, cfg.steps);
        let sol = solve_skeleton(&v, &spec, &cfg).unwrap();
        let m0 = spec.u0.mean();
        for m in 0..=cfg.steps {
            assert!((sol.trajectory.field(m).mean() - m0).abs() < 1e-12);
        }
        assert!(sol.mild_residual < 1e-10, "{}", sol.mild_residual);
    }

    #[test]
    fn silent_noise_matches_skeleton() {
        let grid = Grid::line(16);
        let cfg = SolverConfig::new(2e-3, 40);
        let spec = ModelSpec::default_on(grid);
        let v = ControlPath::from_fn(grid, cfg.dt, cfg.steps, |t: f64, x: &[f64]| t * x[0].sin());
        let w = sample_sheet(&SheetConfig { grid, steps: cfg.steps, dt: cfg.dt }, &SeedSpec::new(3, 0)).unwrap();
        let skel = solve_skeleton(&v, &spec, &cfg).unwrap().trajectory;
        let a = solve_stochastic(&w, Some(&v), 0.0, &spec, &cfg).unwrap();
        assert_eq!(a.states, skel.states);
        let mute = spec.clone().with_sigma(SigmaPreset::Constant { s0: 0.0 });
        let b = solve_stochastic(&w, Some(&v), 0.5, &mute, &cfg).unwrap();
        let c = solve_skeleton(&v, &mute, &cfg).unwrap().trajectory;
        assert_eq!(b.states, c.states);
    }

    #[test]
    fn stochastic_residual_is_small() {
        let grid = Grid::line(16);
        let cfg = SolverConfig::new(2e-3, 40);
        let spec = ModelSpec::default_on(grid);
        let w = sample_sheet(&SheetConfig { grid, steps: cfg.steps, dt: cfg.dt }, &SeedSpec::new(5, 1)).unwrap();
        let integ = Integrator::new(&spec, &cfg).unwrap();
        let (traj, _) = integ.run(Some(&w), None, 0.05).unwrap();
        assert!(integ.mild_residual(&traj, Some(&w), None, 0.05).unwrap() < 1e-10);
    }

    #[test]
    fn blow_up_and_stability_abort() {
        let grid = Grid::line(16);
        let spec = ModelSpec::default_on(grid).with_u0(GridField::constant(grid, 50.0));
        let err = solve_skeleton(&ControlPath::zeros(grid, 1e-3, 5), &spec, &SolverConfig::new(1e-3, 5));
        assert!(matches!(err, Err(Error::Stability { step: 0, .. })));
        let mut cfg = SolverConfig::new(1e-3, 5);
        cfg.blowup_threshold = 10.0;
        let err = solve_skeleton(&ControlPath::zeros(grid, 1e-3, 5), &spec, &cfg);
        assert!(matches!(err, Err(Error::BlowUp { step: 0, .. })));
    }

    #[test]
    fn recording_interval_must_divide() {
        let grid = Grid::line(8);
        let cfg = SolverConfig::new(1e-3, 10).recording(3);
        assert!(Integrator::new(&ModelSpec::<f64>::default_on(grid), &cfg).is_err());
    }
}
