use serde::{Deserialize, Serialize};

use super::{importance_sample, mc_event_probability, EventSpec, McConfig};
use crate::dynamics::{ModelSpec, SolverConfig};
use crate::error::{invalid, shape, Result};
use crate::rate::RateCertificate;
use crate::stats::Z95;
use crate::Scalar;

/// Caveat attached to every report.
pub const SCALING_LABEL: &str = "desk-scale, one-sided comparison: the certificate cost is an upper bound \
on the discrete rate, and Monte Carlo estimates carry finite-noise bias";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions<T> {
    /// Strictly decreasing noise levels.
    pub schedule: Vec<T>,
    /// Replicas per level; a single entry applies to every level.
    pub replicas: Vec<usize>,
    /// Levels `ε ≤ is_below` are importance-sampled with the certificate
    /// control as tilt.
    pub is_below: Option<T>,
    pub seed: u64,
    pub solver: SolverConfig<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub eps_log_p: f64,
    /// `mc` or `is`.
    pub method: String,
    pub replicas: usize,
    pub hits: usize,
    /// `−ε log p̂`.
    pub rate: f64,
    /// Delta-method standard error of `rate`.
    pub rate_se: f64,
    /// Width of the rate interval mapped from `[ci_lo, ci_hi]`.
    pub rate_ci_width: f64,
    /// No hits: `rate` is a one-sided bound.
    pub bound_only: bool,
}

/// One-sided test that `rate` does not decrease as `ε ↓ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    /// Smallest standardized increment `(r_{i+1} − r_i)/√(se_i² + se_{i+1}²)`.
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub certificate_cost: f64,
    pub trend: TrendTest,
    /// `rate/cost` at the smallest `ε`.
    pub final_gap_ratio: f64,
    /// Every `rate ≤ cost + 3·rate_ci_width`.
    pub upper_coherent: bool,
    pub label: String,
}

impl ScalingReport {
    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rate).collect()
    }
}

/// Estimates `−ε log P(event)` along `opts.schedule` (level index `i` uses
/// seed level `i`) and sets it against the certificate cost.
pub fn ldp_scaling_study<T: Scalar>(
    event: &EventSpec<T>,
    certificate: &RateCertificate<T>,
    spec: &ModelSpec<T>,
    opts: &ScalingOptions<T>,
) -> Result<ScalingReport> {
    let n = opts.schedule.len();
    if n == 0 {
        return Err(invalid("empty noise schedule"));
    }
    if opts.schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("noise schedule must be strictly decreasing"));
    }
    if opts.replicas.len() != 1 && opts.replicas.len() != n {
        return Err(invalid("replica schedule must have one entry or one per level"));
    }
    if certificate.control.grid != spec.grid() {
        return Err(shape("certificate lives on a different grid"));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, &eps) in opts.schedule.iter().enumerate() {
        let replicas = if opts.replicas.len() == 1 { opts.replicas[0] } else { opts.replicas[i] };
        let mc = McConfig { solver: opts.solver, replicas, seed: opts.seed, level: i as u32 };
        let e = eps.as_f64();
        let use_is = opts.is_below.is_some_and(|b| eps <= b);
        let row = if use_is {
            let est = importance_sample(event, eps, &certificate.control, spec, &mc)?;
            ScalingRow {
                epsilon: e,
                p_hat: est.p_hat,
                ci_lo: est.ci_lo,
                ci_hi: est.ci_hi,
                eps_log_p: est.eps_log_p,
                method: "is".into(),
                replicas,
                hits: est.hits,
                rate: -est.eps_log_p,
                rate_se: est.eps_log_p_se,
                rate_ci_width: rate_width(e, est.ci_lo, est.ci_hi),
                bound_only: est.bound_only,
            }
        } else {
            let est = mc_event_probability(event, eps, spec, &mc)?;
            let se = (est.p_hat * (1.0 - est.p_hat) / replicas as f64).sqrt();
            ScalingRow {
                epsilon: e,
                p_hat: est.p_hat,
                ci_lo: est.ci_lo,
                ci_hi: est.ci_hi,
                eps_log_p: est.eps_log_p,
                method: "mc".into(),
                replicas,
                hits: est.hits,
                rate: -est.eps_log_p,
                rate_se: if est.bound_only { f64::INFINITY } else { e * se / est.p_hat },
                rate_ci_width: rate_width(e, est.ci_lo, est.ci_hi),
                bound_only: est.bound_only,
            }
        };
        rows.push(row);
    }
    let statistic = rows
        .windows(2)
        .map(|w| {
            let s = (w[0].rate_se.powi(2) + w[1].rate_se.powi(2)).sqrt();
            let d = w[1].rate - w[0].rate;
            if s.is_finite() && s > 0.0 {
                d / s
            } else if d >= 0.0 || s.is_infinite() {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min);
    let cost = certificate.cost.as_f64();
    let last = rows.last().expect("non-empty schedule");
    Ok(ScalingReport {
        final_gap_ratio: last.rate / cost,
        upper_coherent: rows.iter().all(|r| r.rate <= cost + 3.0 * r.rate_ci_width),
        trend: TrendTest { statistic, critical: -Z95, passed: statistic >= -Z95 },
        rows,
        certificate_cost: cost,
        label: SCALING_LABEL.into(),
    })
}

fn rate_width(eps: f64, lo: f64, hi: f64) -> f64 {
    let up = if lo > 0.0 { -eps * lo.ln() } else { f64::INFINITY };
    up - (-eps * hi.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ControlPath, Grid, GridField};
    use crate::rate::{OptimizerTrace, TerminalTarget};

    fn zero_certificate(grid: Grid, cfg: &SolverConfig<f64>) -> RateCertificate<f64> {
        RateCertificate {
            control: ControlPath::zeros(grid, cfg.dt, cfg.steps),
            cost: 0.0,
            endpoint: GridField::zeros(grid),
            residual: 0.0,
            objective: 0.0,
            feasible: true,
            target: TerminalTarget::Ball { center: GridField::zeros(grid), radius: 0.0 },
            trace: OptimizerTrace { iterations: 0, final_grad_norm: 0.0, stationary: true, stages: vec![] },
            restarts: vec![],
        }
    }

    #[test]
    fn complement_rate_vanishes() {
        let grid = Grid::line(8);
        let spec = ModelSpec::default_on(grid);
        let solver = SolverConfig::new(0.01, 20);
        let event = EventSpec::terminal_ball(GridField::zeros(grid), 1.0).complement();
        let opts = ScalingOptions { schedule: vec![0.1, 0.03, 0.01], replicas: vec![50], is_below: None, seed: 2, solver };
        let rep = ldp_scaling_study(&event, &zero_certificate(grid, &solver), &spec, &opts).unwrap();
        assert!(rep.rows.iter().all(|r| r.p_hat == 1.0 && r.rate == 0.0));
        assert!(rep.trend.passed);
        let bad = ScalingOptions { schedule: vec![0.1, 0.2], ..opts };
        assert!(ldp_scaling_study(&event, &zero_certificate(grid, &solver), &spec, &bad).is_err());
    }
}
