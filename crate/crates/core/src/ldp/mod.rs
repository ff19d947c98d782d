//! Monte Carlo estimation of small-noise event probabilities, Girsanov
//! importance sampling and numerical checks of the weak-convergence
//! conditions behind the large deviation principle.

mod event;
mod scaling;
mod verify;

pub use event::{EventKind, EventSpec};
pub use scaling::{ldp_scaling_study, ScalingOptions, ScalingReport, ScalingRow, TrendTest};
pub use verify::{
    control_diameter, verify_a1, verify_a2, A1Report, A1Row, A2Family, A2Report, A2Row, DiameterReport,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, ModelSpec, SolverConfig};
use crate::error::{invalid, Result};
use crate::fields::{ControlPath, Trajectory};
use crate::noise::{girsanov_log_weight, sample_sheet, shift_increments, SeedSpec, SheetConfig};
use crate::stats::{pairwise_sum, wilson_interval, Z95};
use crate::Scalar;

/// Replica layout shared by the estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig<T> {
    pub solver: SolverConfig<T>,
    pub replicas: usize,
    /// Replica `r` reads stream `(level, r)` of this master seed.
    pub seed: u64,
    pub level: u32,
}

/// Plain Monte Carlo estimate of `P(event)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub epsilon: f64,
    pub hits: usize,
    pub replicas: usize,
    pub p_hat: f64,
    /// Wilson 95% interval.
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `ε log p̂`, or the one-sided bound `ε log(1/R)` when there are no hits.
    pub eps_log_p: f64,
    /// Set when `hits = 0` and `eps_log_p` is only an upper bound.
    pub bound_only: bool,
    /// Per-replica indicator outcomes.
    pub outcomes: Vec<bool>,
}

/// Importance-sampling estimate of `P(event)` under a Girsanov tilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub epsilon: f64,
    pub hits: usize,
    pub replicas: usize,
    pub p_hat: f64,
    /// Standard error of `p̂`.
    pub std_error: f64,
    /// Normal 95% interval, clipped at zero.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub eps_log_p: f64,
    /// Delta-method standard error of `ε log p̂`, `ε·se/p̂`.
    pub eps_log_p_se: f64,
    pub bound_only: bool,
    /// Sample variance of the weighted indicator.
    pub variance: f64,
    /// Mean and standard error of the likelihood ratio over all replicas.
    pub mean_weight: f64,
    pub weight_se: f64,
    /// Per-replica `(hit, log weight)`.
    pub samples: Vec<(bool, f64)>,
}

fn check_eps<T: Scalar>(eps: T) -> Result<()> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(invalid(format!("noise level must be positive, got {eps}")));
    }
    Ok(())
}

/// Integrates one replica under the driving increments
/// `√ε ΔW + Δt·h·v`; with `v = 0` this is the plain stochastic run.
/// Returns the trajectory (recorded as the event requires) and the
/// Girsanov log weight.
fn replica<T: Scalar>(
    integ: &Integrator<T>,
    seed: SeedSpec,
    eps: T,
    shift: Option<&ControlPath<T>>,
) -> Result<(Trajectory<T>, T)> {
    let c = integ.config();
    let grid = integ.grid();
    let w = sample_sheet(&SheetConfig { grid, steps: c.steps, dt: c.dt }, &seed)?;
    let zero;
    let v = match shift {
        Some(v) => v,
        None => {
            zero = ControlPath::zeros(grid, c.dt, c.steps);
            &zero
        }
    };
    let driving = shift_increments(&w, v, eps)?;
    let log_w = if shift.is_some() { girsanov_log_weight(&w, v, eps)? } else { T::zero() };
    let (mut traj, _) = integ.run_noise(&driving)?;
    traj.meta.epsilon = eps.as_f64();
    traj.meta.seed = Some(seed);
    Ok((traj, log_w))
}

fn integrator_for<T: Scalar>(event: &EventSpec<T>, spec: &ModelSpec<T>, mc: &McConfig<T>) -> Result<Integrator<T>> {
    if mc.replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let solver = if event.needs_path() { mc.solver.recording(1) } else { mc.solver.recording(mc.solver.steps) };
    Integrator::new(spec, &solver)
}

/// `p̂ = R^{-1} Σ 1{event}` with a Wilson 95% interval.
pub fn mc_event_probability<T: Scalar>(
    event: &EventSpec<T>,
    eps: T,
    spec: &ModelSpec<T>,
    mc: &McConfig<T>,
) -> Result<McEstimate> {
    check_eps(eps)?;
    let integ = integrator_for(event, spec, mc)?;
    let outcomes: Vec<bool> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (traj, _) = replica(&integ, SeedSpec::at_level(mc.seed, mc.level, r), eps, None)?;
            event.occurs(&traj)
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|&&h| h).count();
    let n = mc.replicas;
    let p_hat = hits as f64 / n as f64;
    let (ci_lo, ci_hi) = wilson_interval(hits, n, Z95);
    let e = eps.as_f64();
    let bound_only = hits == 0;
    let eps_log_p = if bound_only { e * (1.0 / n as f64).ln() } else { e * p_hat.ln() };
    Ok(McEstimate { epsilon: e, hits, replicas: n, p_hat, ci_lo, ci_hi, eps_log_p, bound_only, outcomes })
}

/// Weighted estimate `p̂ = R^{-1} Σ 1{event} e^{ℓ_r}` with replicas driven
/// by `√ε ΔW + Δt·h·v*` and `ℓ_r` the Girsanov log weight; sums of
/// weights are accumulated in log space.
pub fn importance_sample<T: Scalar>(
    event: &EventSpec<T>,
    eps: T,
    v_star: &ControlPath<T>,
    spec: &ModelSpec<T>,
    mc: &McConfig<T>,
) -> Result<IsEstimate> {
    check_eps(eps)?;
    if !v_star.in_ball(None) {
        return Err(invalid("tilting control lies outside its tagged ball"));
    }
    let integ = integrator_for(event, spec, mc)?;
    let samples: Vec<(bool, f64)> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (traj, lw) = replica(&integ, SeedSpec::at_level(mc.seed, mc.level, r), eps, Some(v_star))?;
            Ok((event.occurs(&traj)?, lw.as_f64()))
        })
        .collect::<Result<_>>()?;
    let n = mc.replicas as f64;
    let hit_lw: Vec<f64> = samples.iter().filter(|s| s.0).map(|s| s.1).collect();
    let all_lw: Vec<f64> = samples.iter().map(|s| s.1).collect();
    // returns (mean, log mean, variance) of e^ℓ, shifted by the largest ℓ
    let moments = |lw: &[f64]| {
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return (0.0, f64::NEG_INFINITY, 0.0);
        }
        let scaled: Vec<f64> = lw.iter().map(|x| (x - max).exp()).collect();
        let squared: Vec<f64> = scaled.iter().map(|x| x * x).collect();
        let (s1, s2) = (pairwise_sum(&scaled) / n, pairwise_sum(&squared) / n);
        let m1 = max.exp() * s1;
        let var = if n > 1.0 { (max + max).exp() * (s2 - s1 * s1).max(0.0) * n / (n - 1.0) } else { 0.0 };
        (m1, max + s1.ln(), var)
    };
    let (p_hat, log_p, variance) = moments(&hit_lw);
    let std_error = (variance / n).sqrt();
    let (mean_weight, _, wvar) = moments(&all_lw);
    let e = eps.as_f64();
    let bound_only = hit_lw.is_empty();
    let (eps_log_p, eps_log_p_se) = if bound_only {
        (e * (1.0 / n).ln(), f64::INFINITY)
    } else {
        (e * log_p, e * (variance / n).sqrt() / p_hat)
    };
    Ok(IsEstimate {
        epsilon: e,
        hits: hit_lw.len(),
        replicas: mc.replicas,
        p_hat,
        std_error,
        ci_lo: (p_hat - Z95 * std_error).max(0.0),
        ci_hi: p_hat + Z95 * std_error,
        eps_log_p,
        eps_log_p_se,
        bound_only,
        variance,
        mean_weight,
        weight_se: (wvar / n).sqrt(),
        samples,
    })
}

/// Sample variance of the plain indicator, for comparison with
/// [`IsEstimate::variance`].
pub fn indicator_variance(est: &McEstimate) -> f64 {
    let n = est.replicas as f64;
    if n < 2.0 {
        return 0.0;
    }
    let dev: Vec<f64> = est.outcomes.iter().map(|&h| (f64::from(u8::from(h)) - est.p_hat).powi(2)).collect();
    pairwise_sum(&dev) / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SigmaPreset;
    use crate::fields::{Grid, GridField};

    fn fixture() -> (ModelSpec<f64>, McConfig<f64>) {
        let grid = Grid::line(8);
        let spec = ModelSpec::default_on(grid);
        let mc = McConfig { solver: SolverConfig::new(0.01, 20), replicas: 64, seed: 4, level: 0 };
        (spec, mc)
    }

    #[test]
    fn trivial_events() {
        let (spec, mc) = fixture();
        let always = EventSpec::whole_space(spec.grid());
        let est = mc_event_probability(&always, 0.1, &spec, &mc).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.eps_log_p, 0.0);
        let never = EventSpec::terminal_ball(GridField::zeros(spec.grid()), 1e9);
        let est = mc_event_probability(&never, 0.1, &spec, &mc).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert!(est.bound_only);
        assert!((est.eps_log_p - 0.1 * (1.0f64 / 64.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_tilt_reproduces_plain_mc() {
        let (spec, mc) = fixture();
        let g = GridField::zeros(spec.grid());
        let event = EventSpec::terminal_ball(g, 0.35);
        let plain = mc_event_probability(&event, 0.2, &spec, &mc).unwrap();
        let v = ControlPath::zeros(spec.grid(), mc.solver.dt, mc.solver.steps);
        let is = importance_sample(&event, 0.2, &v, &spec, &mc).unwrap();
        assert_eq!(plain.p_hat, is.p_hat);
        assert!(plain.hits > 0 && plain.hits < 64, "{}", plain.hits);
        assert_eq!(is.mean_weight, 1.0);
    }

    #[test]
    fn nested_events_are_ordered() {
        let (spec, mc) = fixture();
        let g = GridField::zeros(spec.grid());
        let small = mc_event_probability(&EventSpec::terminal_ball(g.clone(), 0.5), 0.2, &spec, &mc).unwrap();
        let large = mc_event_probability(&EventSpec::terminal_ball(g, 0.3), 0.2, &spec, &mc).unwrap();
        assert!(small.outcomes.iter().zip(&large.outcomes).all(|(a, b)| !a || *b));
        assert!(small.p_hat <= large.p_hat);
    }

    #[test]
    fn reruns_are_identical() {
        let (spec, mc) = fixture();
        let spec = spec.with_sigma(SigmaPreset::ClippedLinear { bound: 0.5 });
        let event = EventSpec::terminal_ball(GridField::zeros(spec.grid()), 0.3);
        let v = ControlPath::from_fn(spec.grid(), mc.solver.dt, mc.solver.steps, |_, x: &[f64]| x[0].cos());
        let a = importance_sample(&event, 0.1, &v, &spec, &mc).unwrap();
        let b = importance_sample(&event, 0.1, &v, &spec, &mc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (spec, mc) = fixture();
        let event = EventSpec::whole_space(spec.grid());
        assert!(mc_event_probability(&event, 0.0, &spec, &mc).is_err());
        let v = ControlPath::from_fn(spec.grid(), mc.solver.dt, mc.solver.steps, |_, _| 5.0).with_bound(0.1);
        assert!(importance_sample(&event, 0.1, &v, &spec, &mc).is_err());
    }
}
