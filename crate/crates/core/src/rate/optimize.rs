use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adjoint::RateProblem;
use super::TerminalTarget;
use crate::dynamics::{ModelSpec, SolverConfig};
use crate::error::{invalid, Result};
use crate::fields::{ControlPath, GridField};
use crate::noise::SeedSpec;
use crate::Scalar;

/// Settings of [`minimize_rate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateOptions<T> {
    /// Stop once the gradient norm falls below this.
    pub gtol: T,
    /// Iteration cap per penalty stage.
    pub max_iter: usize,
    /// Decreasing penalty parameters, warm-started in turn. Ignored for
    /// smooth targets, which use a single stage.
    pub mu_schedule: Vec<T>,
    /// L-BFGS memory.
    pub memory: usize,
    /// Extra runs from random controls besides the one from `initial`.
    pub restarts: usize,
    /// Pointwise standard deviation of random starting controls.
    pub restart_scale: T,
    /// Master seed of the random starts (level 0, one replica per start).
    pub seed: u64,
    /// Largest constraint violation a certificate may carry.
    pub feasibility_tol: T,
}

impl<T: Scalar> Default for RateOptions<T> {
    fn default() -> Self {
        Self {
            gtol: T::lit(1e-6),
            max_iter: 200,
            mu_schedule: [1.0, 0.1, 0.01, 1e-3, 1e-4].iter().map(|&m| T::lit(m)).collect(),
            memory: 10,
            restarts: 0,
            restart_scale: T::one(),
            seed: 0,
            feasibility_tol: T::lit(1e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub mu: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
}

/// What the optimizer did on the returned run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Whether every stage ended with the gradient below `gtol`.
    pub stationary: bool,
    pub stages: Vec<StageRecord>,
}

/// One row of the restart table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    /// `None` for the run started from `initial`.
    pub replica: Option<u64>,
    pub cost: f64,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub stationary: bool,
}

/// Numerical upper bound on the rate of a terminal target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate<T> {
    pub control: ControlPath<T>,
    /// `½‖v‖²`.
    pub cost: T,
    /// Skeleton endpoint under `control`.
    pub endpoint: GridField<T>,
    /// Constraint violation of `endpoint` (zero for smooth targets).
    pub residual: T,
    /// Penalized objective at the last stage.
    pub objective: T,
    /// `residual ≤ feasibility_tol`.
    pub feasible: bool,
    pub target: TerminalTarget<T>,
    pub trace: OptimizerTrace,
    /// Every run, best one included.
    pub restarts: Vec<RestartRecord>,
}

struct Run<T> {
    control: ControlPath<T>,
    trace: OptimizerTrace,
}

/// Quadrature-inner-product L-BFGS with Armijo backtracking.
fn lbfgs<T: Scalar>(problem: &RateProblem<T>, x0: ControlPath<T>, opts: &RateOptions<T>) -> Result<(ControlPath<T>, StageRecord, bool)> {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 60;
    let dot = |a: &ControlPath<T>, b: &ControlPath<T>| a.dot(b).expect("same layout");
    let mut x = x0;
    let (mut f, mut g) = problem.gradient(&x)?;
    let mut memory: VecDeque<(ControlPath<T>, ControlPath<T>, T)> = VecDeque::new();
    let mut iterations = 0;
    let mut gnorm = dot(&g, &g).sqrt();
    let mut converged = gnorm < opts.gtol;
    while !converged && iterations < opts.max_iter {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = *rho * dot(s, &q);
            q = q.sub(&y.scale(a))?;
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            q = q.scale(dot(s, y) / dot(y, y));
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            q = q.add(&s.scale(a - b))?;
        }
        let mut dir = q.scale(-T::one());
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            memory.clear();
            dir = g.scale(-T::one());
            slope = -gnorm * gnorm;
        }
        let mut step = if memory.is_empty() { T::one().min(T::one() / gnorm) } else { T::one() };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = x.add(&dir.scale(step))?;
            match problem.gradient(&trial) {
                Ok((ft, gt)) if ft.is_finite() && ft <= f + T::lit(ARMIJO) * step * slope => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                // solver aborts count as failed trials
                Ok(_) | Err(crate::Error::BlowUp { .. }) | Err(crate::Error::Stability { .. }) => {}
                Err(e) => return Err(e),
            }
            step = step * T::lit(0.5);
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        iterations += 1;
        let s = xn.sub(&x)?;
        let y = gn.sub(&g)?;
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            memory.push_back((s, y, T::one() / sy));
            if memory.len() > opts.memory.max(1) {
                memory.pop_front();
            }
        }
        let stalled = (f - fn_).abs() <= T::epsilon() * f.abs().max(T::one());
        x = xn;
        f = fn_;
        g = gn;
        gnorm = dot(&g, &g).sqrt();
        converged = gnorm < opts.gtol;
        if stalled {
            break;
        }
    }
    let record = StageRecord { mu: problem.mu().as_f64(), iterations, grad_norm: gnorm.as_f64(), objective: f.as_f64() };
    Ok((x, record, converged))
}

fn run_from<T: Scalar>(
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
    target: &TerminalTarget<T>,
    start: ControlPath<T>,
    opts: &RateOptions<T>,
) -> Result<Run<T>> {
    let schedule: Vec<T> = if target.is_constraint() { opts.mu_schedule.clone() } else { vec![T::one()] };
    let mut control = start;
    let mut stages = Vec::new();
    let mut stationary = true;
    for mu in schedule {
        let problem = RateProblem::new(spec, config, target, mu)?;
        let (x, record, ok) = lbfgs(&problem, control, opts)?;
        control = x;
        stationary &= ok;
        stages.push(record);
    }
    let last = stages.last().expect("at least one stage");
    let trace = OptimizerTrace {
        iterations: stages.iter().map(|s| s.iterations).sum(),
        final_grad_norm: last.grad_norm,
        stationary,
        stages,
    };
    Ok(Run { control, trace })
}

/// Minimizes `½‖v‖² + P(u^v(T))` over grid controls, returning the best
/// run among the start from `initial` (zero when `None`) and
/// `opts.restarts` random starts.
///
/// For ball and exterior targets the penalty parameter follows
/// `opts.mu_schedule`. A run is preferred when it is feasible, then by
/// cost; infeasible runs are ranked by the final objective.
pub fn minimize_rate<T: Scalar>(
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
    target: &TerminalTarget<T>,
    initial: Option<&ControlPath<T>>,
    opts: &RateOptions<T>,
) -> Result<RateCertificate<T>> {
    if opts.mu_schedule.is_empty() && target.is_constraint() {
        return Err(invalid("empty penalty schedule"));
    }
    let grid = spec.grid();
    let zero = ControlPath::zeros(grid, config.dt, config.steps);
    let first = initial.cloned().unwrap_or(zero);
    if !first.same_layout(&ControlPath::zeros(grid, config.dt, config.steps)) {
        return Err(crate::error::shape("initial control does not match the solver grid"));
    }
    let mut starts: Vec<(Option<u64>, ControlPath<T>)> = vec![(None, first)];
    for r in 0..opts.restarts as u64 {
        let z = SeedSpec::new(opts.seed, r).normals(config.steps * grid.len());
        let values = z.into_iter().map(|x| T::lit(x) * opts.restart_scale).collect();
        starts.push((Some(r), ControlPath::new(grid, config.dt, config.steps, values)?));
    }
    let runs: Vec<Result<(Option<u64>, Run<T>)>> = starts
        .into_par_iter()
        .map(|(replica, start)| run_from(spec, config, target, start, opts).map(|r| (replica, r)))
        .collect();
    let final_problem = RateProblem::new(
        spec,
        config,
        target,
        opts.mu_schedule.last().copied().unwrap_or_else(T::one),
    )?;
    let mut table = Vec::new();
    let mut best: Option<(bool, T, T, Run<T>, super::adjoint::Evaluation<T>)> = None;
    for run in runs {
        let (replica, run) = run?;
        let eval = final_problem.evaluate(&run.control)?;
        let feasible = eval.violation <= opts.feasibility_tol;
        table.push(RestartRecord {
            replica,
            cost: eval.cost.as_f64(),
            residual: eval.violation.as_f64(),
            objective: eval.objective.as_f64(),
            iterations: run.trace.iterations,
            stationary: run.trace.stationary,
        });
        let key = if feasible { eval.cost } else { eval.objective };
        let better = match &best {
            None => true,
            Some((bf, bk, _, _, _)) => (feasible && !bf) || (feasible == *bf && key < *bk),
        };
        if better {
            best = Some((feasible, key, eval.objective, run, eval));
        }
    }
    let (feasible, _, objective, run, eval) = best.expect("at least one run");
    Ok(RateCertificate {
        control: run.control,
        cost: eval.cost,
        endpoint: eval.endpoint,
        residual: eval.violation,
        objective,
        feasible,
        target: target.clone(),
        trace: run.trace,
        restarts: table,
    })
}
