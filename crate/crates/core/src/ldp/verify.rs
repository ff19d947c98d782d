use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::McConfig;
use crate::dynamics::{solve_skeleton, Integrator, ModelSpec, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::fields::{control_norm_sq, holder_norm, ControlPath, GridField, Trajectory};
use crate::noise::{sample_sheet, SeedSpec, SheetConfig};
use crate::stats::{mean_var, ols};
use crate::Scalar;

/// Family `v^ε` of controls converging to `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum A2Family<T> {
    /// `v^ε = v`.
    Fixed,
    /// `v^ε = v + ε^{1/2}·perturbation`.
    Perturbed { perturbation: ControlPath<T> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Row {
    pub epsilon: f64,
    pub mean_distance: f64,
    pub std_error: f64,
    pub replicas: usize,
}

/// Mean Hölder distance between controlled stochastic paths and the
/// skeleton, by noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Report {
    pub alpha: f64,
    pub p: f64,
    pub rows: Vec<A2Row>,
    /// Log-log slope of mean distance against `ε`; `None` when some mean
    /// distance vanishes.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// For each `ε` in `schedule`, the mean over replicas of
/// `‖u^{ε,v^ε} − u^v‖_{α,p}`, with `u^{ε,v^ε}` driven by `√ε W` and the
/// control `v^ε`. Replica `r` at schedule index `i` reads seed stream
/// `(mc.level + i, r)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_a2<T: Scalar>(
    v: &ControlPath<T>,
    family: &A2Family<T>,
    schedule: &[T],
    spec: &ModelSpec<T>,
    mc: &McConfig<T>,
    alpha: T,
    p: T,
) -> Result<A2Report> {
    if schedule.len() < 3 {
        return Err(Error::Fit(format!("{} noise levels, need at least 3", schedule.len())));
    }
    if schedule.iter().any(|e| !(*e > T::zero())) {
        return Err(invalid("noise levels must be positive"));
    }
    if mc.replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let config = mc.solver.recording(1);
    let integ = Integrator::new(spec, &config)?;
    let skeleton = solve_skeleton(v, spec, &config)?.trajectory;
    let sheet = SheetConfig { grid: spec.grid(), steps: config.steps, dt: config.dt };
    let mut rows = Vec::with_capacity(schedule.len());
    for (i, &eps) in schedule.iter().enumerate() {
        let v_eps = match family {
            A2Family::Fixed => v.clone(),
            A2Family::Perturbed { perturbation } => v.add(&perturbation.scale(eps.sqrt()))?,
        };
        let level = mc.level + i as u32;
        let distances: Vec<f64> = (0..mc.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let w = sample_sheet(&sheet, &SeedSpec::at_level(mc.seed, level, r))?;
                let (traj, _) = integ.run(Some(&w), Some(&v_eps), eps)?;
                Ok(holder_norm(&traj.sub(&skeleton)?, alpha, p)?.value().as_f64())
            })
            .collect::<Result<_>>()?;
        let (mean, var) = mean_var(&distances);
        rows.push(A2Row {
            epsilon: eps.as_f64(),
            mean_distance: mean,
            std_error: (var / distances.len() as f64).sqrt(),
            replicas: distances.len(),
        });
    }
    let (slope, intercept) = if rows.iter().all(|r| r.mean_distance > 0.0) {
        let lx: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.mean_distance.ln()).collect();
        let (s, c) = ols(&lx, &ly)?;
        (Some(s), Some(c))
    } else {
        (None, None)
    };
    Ok(A2Report { alpha: alpha.as_f64(), p: p.as_f64(), rows, slope, intercept })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A1Row {
    pub frequency: usize,
    pub distance: f64,
    /// `‖v_n‖²`.
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A1Report {
    pub alpha: f64,
    pub p: f64,
    pub radius_sq: f64,
    pub rows: Vec<A1Row>,
}

/// Skeleton distances `‖u^{v_n} − u^v‖_{α,p}` for the weakly null
/// oscillations `v_n(t, x) = v(t, x) + sin(n t)·g(x)`, every `v_n` being
/// required to stay in the ball `‖·‖² ≤ radius_sq`.
#[allow(clippy::too_many_arguments)]
pub fn verify_a1<T: Scalar>(
    v: &ControlPath<T>,
    g: &GridField<T>,
    frequencies: &[usize],
    radius_sq: T,
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
    alpha: T,
    p: T,
) -> Result<A1Report> {
    if g.grid != v.grid {
        return Err(crate::error::shape("oscillation profile lives on a different grid"));
    }
    if !v.in_ball(Some(radius_sq)) {
        return Err(invalid("base control lies outside the ball"));
    }
    let config = config.recording(1);
    let base = solve_skeleton(v, spec, &config)?.trajectory;
    let mut rows = Vec::with_capacity(frequencies.len());
    let len = v.grid.len();
    for &n in frequencies {
        let mut vn = v.clone();
        for m in 0..v.steps {
            let s = (T::from_usize_lossy(n) * T::from_usize_lossy(m) * v.dt).sin();
            let slot = &mut vn.values[m * len..(m + 1) * len];
            slot.iter_mut().zip(&g.values).for_each(|(a, &b)| *a = *a + s * b);
        }
        let norm_sq = control_norm_sq(&vn);
        if norm_sq > radius_sq {
            return Err(invalid(format!("oscillation n = {n} leaves the ball: ‖v_n‖² = {norm_sq} > {radius_sq}")));
        }
        let traj = solve_skeleton(&vn, spec, &config)?.trajectory;
        rows.push(A1Row {
            frequency: n,
            distance: holder_norm(&traj.sub(&base)?, alpha, p)?.value().as_f64(),
            norm_sq: norm_sq.as_f64(),
        });
    }
    Ok(A1Report { alpha: alpha.as_f64(), p: p.as_f64(), radius_sq: radius_sq.as_f64(), rows })
}

/// Largest pairwise distance among skeleton paths of random controls in a
/// ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterReport {
    pub radius_sq: f64,
    pub count: usize,
    pub diameter: f64,
    /// `‖v_i‖²` of the sampled controls.
    pub norms_sq: Vec<f64>,
}

/// Empirical diameter of `{u^v : ‖v‖² ≤ N}` from `count` random controls;
/// control `i` is a white-noise field (seed stream `(0, i)`) rescaled to
/// `‖v_i‖² = N·(i+1)/count`.
#[allow(clippy::too_many_arguments)]
pub fn control_diameter<T: Scalar>(
    radius_sq: T,
    count: usize,
    seed: u64,
    spec: &ModelSpec<T>,
    config: &SolverConfig<T>,
    alpha: T,
    p: T,
) -> Result<DiameterReport> {
    if count < 2 {
        return Err(invalid("need at least two controls"));
    }
    let grid = spec.grid();
    let config = config.recording(1);
    let runs: Vec<(f64, Trajectory<T>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let z = SeedSpec::new(seed, i as u64).normals(config.steps * grid.len());
            let raw = ControlPath::new(grid, config.dt, config.steps, z.into_iter().map(T::lit).collect())?;
            let want = radius_sq * T::from_usize_lossy(i + 1) / T::from_usize_lossy(count);
            let v = raw.scale((want / control_norm_sq(&raw)).sqrt());
            let traj = solve_skeleton(&v, spec, &config)?.trajectory;
            Ok((control_norm_sq(&v).as_f64(), traj))
        })
        .collect::<Result<_>>()?;
    let mut diameter = 0.0_f64;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let d = holder_norm(&runs[i].1.sub(&runs[j].1)?, alpha, p)?.value().as_f64();
            diameter = diameter.max(d);
        }
    }
    Ok(DiameterReport {
        radius_sq: radius_sq.as_f64(),
        count,
        diameter,
        norms_sq: runs.iter().map(|r| r.0).collect(),
    })
}
