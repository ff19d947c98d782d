use anyhow::{bail, Context};
use chlab::ldp::ScalingRow;
use chlab::rate::{OptimizerTrace, RestartRecord};
use chlab::{
    check_green_increments, control_diameter, holder_norm, importance_sample, ldp_scaling_study, lp_norm,
    mc_event_probability, minimize_rate, moment_diagnostic, rate_eval, sample_sheet, solve_skeleton, solve_stochastic,
    verify_a1, verify_a2, A2Family, ControlPath, EventSpec, GreenProbe, GridField, McConfig, RateCertificate,
    RateOptions, ScalingOptions, SeedSpec, SheetConfig, SmoothFunctional, TerminalTarget,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::{control_csv, parse_control_csv, table_csv, trajectory_csv, ArtifactSet};
use crate::config::{ControlSection, EventKindName, RunConfig, TargetKind};
use crate::Command;

pub(crate) fn execute(command: Command, cfg: &RunConfig) -> anyhow::Result<ArtifactSet> {
    let mut out = ArtifactSet::default();
    match command {
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::Skeleton => skeleton(cfg, &mut out)?,
        Command::RateMin => {
            let cert = optimize(cfg)?;
            out.json("certificate.json", &CertificateDoc::from_certificate(&cert)?)?;
        }
        Command::Mc => mc(cfg, &mut out)?,
        Command::Is => is(cfg, &mut out)?,
        Command::VerifyA1 => a1(cfg, &mut out)?,
        Command::VerifyA2 => a2(cfg, &mut out)?,
        Command::GreenCheck => green(cfg, &mut out)?,
        Command::ScalingStudy => scaling(cfg, &mut out)?,
    }
    Ok(out)
}

/// Certificate on disk, the control inlined as a CSV block.
#[derive(Debug, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub cost: f64,
    pub residual: f64,
    pub objective: f64,
    pub feasible: bool,
    pub dt: f64,
    pub steps: usize,
    pub target: TerminalTarget<f64>,
    pub endpoint: GridField<f64>,
    pub trace: OptimizerTrace,
    pub restarts: Vec<RestartRecord>,
    pub control_csv: String,
}

impl CertificateDoc {
    fn from_certificate(c: &RateCertificate<f64>) -> anyhow::Result<Self> {
        Ok(Self {
            cost: c.cost,
            residual: c.residual,
            objective: c.objective,
            feasible: c.feasible,
            dt: c.control.dt,
            steps: c.control.steps,
            target: c.target.clone(),
            endpoint: c.endpoint.clone(),
            trace: c.trace.clone(),
            restarts: c.restarts.clone(),
            control_csv: control_csv(&c.control)?,
        })
    }

    fn into_certificate(self) -> anyhow::Result<RateCertificate<f64>> {
        let control = parse_control_csv(&self.control_csv, self.endpoint.grid, self.dt)?;
        if control.steps != self.steps {
            bail!("certificate control has {} rows, header says {}", control.steps, self.steps);
        }
        Ok(RateCertificate {
            control,
            cost: self.cost,
            endpoint: self.endpoint,
            residual: self.residual,
            objective: self.objective,
            feasible: self.feasible,
            target: self.target,
            trace: self.trace,
            restarts: self.restarts,
        })
    }
}

fn target(cfg: &RunConfig) -> anyhow::Result<TerminalTarget<f64>> {
    let t = &cfg.target;
    let center = cfg.center(t.center, &t.shift)?;
    Ok(match t.kind {
        TargetKind::Ball => TerminalTarget::Ball { center, radius: t.radius },
        TargetKind::Exterior => TerminalTarget::Exterior { center, radius: t.radius },
        TargetKind::Quadratic => TerminalTarget::Smooth {
            functional: SmoothFunctional::Quadratic { center, weight: t.weight },
            eps_ref: t.eps_ref,
        },
        TargetKind::Linear => {
            TerminalTarget::Smooth { functional: SmoothFunctional::Linear { direction: center }, eps_ref: t.eps_ref }
        }
    })
}

fn optimize(cfg: &RunConfig) -> anyhow::Result<RateCertificate<f64>> {
    let t = &cfg.target;
    let opts = RateOptions {
        gtol: t.gtol,
        max_iter: t.max_iter,
        restarts: t.restarts,
        restart_scale: t.restart_scale,
        seed: t.seed,
        ..Default::default()
    };
    Ok(minimize_rate(&cfg.model_spec()?, &cfg.solver(), &target(cfg)?, None, &opts)?)
}

/// The configured control; `Optimizer` and certificate files also return
/// the certificate.
fn control(cfg: &RunConfig) -> anyhow::Result<(ControlPath<f64>, Option<RateCertificate<f64>>)> {
    let grid = cfg.grid()?;
    let s = cfg.solver();
    let found = match &cfg.control {
        ControlSection::Zero => (ControlPath::zeros(grid, s.dt, s.steps), None),
        ControlSection::Profile { modes } => {
            let g = cfg.field(modes)?;
            let values = (0..s.steps).flat_map(|_| g.values.iter().copied()).collect();
            (ControlPath::new(grid, s.dt, s.steps, values)?, None)
        }
        ControlSection::File { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if path.extension().is_some_and(|e| e == "json") {
                let doc: CertificateDoc = serde_json::from_str(&text)?;
                let cert = doc.into_certificate()?;
                (cert.control.clone(), Some(cert))
            } else {
                (parse_control_csv(&text, grid, s.dt)?, None)
            }
        }
        ControlSection::Optimizer => {
            let cert = optimize(cfg)?;
            (cert.control.clone(), Some(cert))
        }
    };
    let v = &found.0;
    if v.grid != grid || v.steps != s.steps || v.dt != s.dt {
        bail!("control does not match the configured grid ({} steps of {})", s.steps, s.dt);
    }
    Ok(found)
}

fn event(cfg: &RunConfig) -> anyhow::Result<EventSpec<f64>> {
    let e = &cfg.event;
    let mut ev = match e.kind {
        EventKindName::TerminalBall => EventSpec::terminal_ball(cfg.center(e.center, &e.shift)?, e.delta),
        EventKindName::Tube | EventKindName::HolderBall => {
            let grid = cfg.grid()?;
            let s = cfg.solver();
            let zero = ControlPath::zeros(grid, s.dt, s.steps);
            let reference = solve_skeleton(&zero, &cfg.model_spec()?, &s)?.trajectory;
            if e.kind == EventKindName::Tube {
                EventSpec::tube(reference, e.delta)
            } else {
                EventSpec::holder_ball(reference, cfg.exponents.alpha, cfg.exponents.p, e.delta)
            }
        }
    };
    if e.complement {
        ev = ev.complement();
    }
    Ok(ev)
}

#[derive(Serialize)]
struct SimulateSummary {
    epsilon: f64,
    replicas: usize,
    /// `sup_m R⁻¹ Σ_r ‖u_r(t_m)‖_p^q`.
    moment_sup: f64,
    p: f64,
    q: f64,
    /// Replica 0.
    holder_norm: f64,
    sup_lp_norm: f64,
    final_mean: f64,
}

fn simulate(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let s = cfg.solver();
    let (v, _) = control(cfg)?;
    let v = if matches!(cfg.control, ControlSection::Zero) { None } else { Some(&v) };
    let eps = cfg.noise.epsilon[0];
    let replicas = cfg.replicas_at(0);
    let sheet = SheetConfig { grid: cfg.grid()?, steps: s.steps, dt: s.dt };
    let mut trajs = Vec::with_capacity(replicas);
    for r in 0..replicas as u64 {
        let w = sample_sheet(&sheet, &SeedSpec::at_level(cfg.noise.seed, 0, r))?;
        if r == 0 && cfg.noise.dump {
            let mut bytes = vec![];
            w.write_le_f64(&mut bytes)?;
            out.add("noise.bin", bytes);
        }
        trajs.push(solve_stochastic(&w, v, eps, &spec, &s).with_context(|| format!("replica {r}"))?);
    }
    let e = &cfg.exponents;
    let first = &trajs[0];
    out.add("trajectory.csv", trajectory_csv(first)?);
    out.json(
        "summary.json",
        &SimulateSummary {
            epsilon: eps,
            replicas,
            moment_sup: moment_diagnostic(&trajs, e.p, e.q)?,
            p: e.p,
            q: e.q,
            holder_norm: holder_norm(first, e.alpha, e.p)?.value(),
            sup_lp_norm: first.sup_norm(e.p)?,
            final_mean: first.last().mean(),
        },
    )
}

#[derive(Serialize)]
struct SkeletonSummary {
    mild_residual: f64,
    within_tolerance: bool,
    cost: f64,
    holder_norm: f64,
    initial_mean: f64,
    final_mean: f64,
}

fn skeleton(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let (v, _) = control(cfg)?;
    let sol = solve_skeleton(&v, &spec, &cfg.solver())?;
    let traj = &sol.trajectory;
    out.add("trajectory.csv", trajectory_csv(traj)?);
    out.json(
        "summary.json",
        &SkeletonSummary {
            mild_residual: sol.mild_residual,
            within_tolerance: sol.within_tolerance,
            cost: rate_eval(&v),
            holder_norm: holder_norm(traj, cfg.exponents.alpha, cfg.exponents.p)?.value(),
            initial_mean: traj.field(0).mean(),
            final_mean: traj.last().mean(),
        },
    )
}

const TABLE_HEADER: [&str; 7] = ["epsilon", "p_hat", "ci_lo", "ci_hi", "eps_log_p", "method", "replicas"];

fn table_row(epsilon: f64, p_hat: f64, lo: f64, hi: f64, elp: f64, method: &str, replicas: usize) -> Vec<String> {
    vec![
        epsilon.to_string(),
        p_hat.to_string(),
        lo.to_string(),
        hi.to_string(),
        elp.to_string(),
        method.to_string(),
        replicas.to_string(),
    ]
}

fn mc_config(cfg: &RunConfig, i: usize) -> McConfig<f64> {
    McConfig { solver: cfg.solver(), replicas: cfg.replicas_at(i), seed: cfg.noise.seed, level: i as u32 }
}

/// `McEstimate` without the per-replica outcomes.
#[derive(Serialize)]
struct McRow {
    epsilon: f64,
    hits: usize,
    replicas: usize,
    p_hat: f64,
    ci_lo: f64,
    ci_hi: f64,
    eps_log_p: f64,
    bound_only: bool,
}

fn mc(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let ev = event(cfg)?;
    let mut rows = vec![];
    let mut table = vec![];
    for (i, &eps) in cfg.noise.epsilon.iter().enumerate() {
        let e = mc_event_probability(&ev, eps, &spec, &mc_config(cfg, i))?;
        table.push(table_row(eps, e.p_hat, e.ci_lo, e.ci_hi, e.eps_log_p, "mc", e.replicas));
        rows.push(McRow {
            epsilon: e.epsilon,
            hits: e.hits,
            replicas: e.replicas,
            p_hat: e.p_hat,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            eps_log_p: e.eps_log_p,
            bound_only: e.bound_only,
        });
    }
    out.json("mc.json", &rows)?;
    out.add("mc.csv", table_csv(&TABLE_HEADER, &table)?);
    Ok(())
}

#[derive(Serialize)]
struct IsRow {
    epsilon: f64,
    hits: usize,
    replicas: usize,
    p_hat: f64,
    std_error: f64,
    ci_lo: f64,
    ci_hi: f64,
    eps_log_p: f64,
    eps_log_p_se: f64,
    bound_only: bool,
    variance: f64,
    mean_weight: f64,
    weight_se: f64,
}

fn is(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let ev = event(cfg)?;
    let (v, cert) = control(cfg)?;
    if let Some(c) = &cert {
        out.json("certificate.json", &CertificateDoc::from_certificate(c)?)?;
    }
    let mut rows = vec![];
    let mut table = vec![];
    for (i, &eps) in cfg.noise.epsilon.iter().enumerate() {
        let e = importance_sample(&ev, eps, &v, &spec, &mc_config(cfg, i))?;
        table.push(table_row(eps, e.p_hat, e.ci_lo, e.ci_hi, e.eps_log_p, "is", e.replicas));
        rows.push(IsRow {
            epsilon: e.epsilon,
            hits: e.hits,
            replicas: e.replicas,
            p_hat: e.p_hat,
            std_error: e.std_error,
            ci_lo: e.ci_lo,
            ci_hi: e.ci_hi,
            eps_log_p: e.eps_log_p,
            eps_log_p_se: e.eps_log_p_se,
            bound_only: e.bound_only,
            variance: e.variance,
            mean_weight: e.mean_weight,
            weight_se: e.weight_se,
        });
    }
    out.json("is.json", &rows)?;
    out.add("is.csv", table_csv(&TABLE_HEADER, &table)?);
    Ok(())
}

#[derive(Serialize)]
struct A1Doc {
    report: chlab::A1Report,
    /// Last over first distance.
    ratio: f64,
    decreasing: bool,
    diameter: Option<chlab::ldp::DiameterReport>,
}

fn a1(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let s = cfg.solver();
    let (v, _) = control(cfg)?;
    let g = cfg.field(&cfg.a1.profile)?;
    let e = &cfg.exponents;
    let report = verify_a1(&v, &g, &cfg.a1.frequencies, cfg.a1.radius_sq, &spec, &s, e.alpha, e.p)?;
    let d: Vec<f64> = report.rows.iter().map(|r| r.distance).collect();
    let ratio = match (d.first(), d.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => b / a,
        _ => f64::NAN,
    };
    let diameter = if cfg.a1.diameter_count >= 2 {
        Some(control_diameter(cfg.a1.radius_sq, cfg.a1.diameter_count, cfg.noise.seed, &spec, &s, e.alpha, e.p)?)
    } else {
        None
    };
    let doc = A1Doc { ratio, decreasing: d.windows(2).all(|w| w[1] < w[0]), report, diameter };
    // NaN has no JSON form; serde_json writes it as null
    out.json("a1.json", &doc)
}

fn a2(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let (v, _) = control(cfg)?;
    let family = if cfg.a2.perturbation.is_empty() {
        A2Family::Fixed
    } else {
        let g = cfg.field(&cfg.a2.perturbation)?;
        let s = cfg.solver();
        let values = (0..s.steps).flat_map(|_| g.values.iter().copied()).collect();
        A2Family::Perturbed { perturbation: ControlPath::new(g.grid, s.dt, s.steps, values)? }
    };
    let e = &cfg.exponents;
    let report = verify_a2(&v, &family, &cfg.noise.epsilon, &spec, &mc_config(cfg, 0), e.alpha, e.p)?;
    out.json("a2.json", &report)
}

#[derive(Serialize)]
struct GreenDoc {
    gamma_hat: f64,
    gamma_hat_prime: f64,
    target_gamma_prime: f64,
    report: chlab::GreenIncrementReport,
}

fn green(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    if cfg.grid.dim != 1 {
        bail!("green-check is implemented for d = 1");
    }
    let g = &cfg.green;
    let probe =
        GreenProbe { horizon: g.horizon, point: g.point, truncation: g.truncation, nodes: g.nodes, ..Default::default() };
    let report = check_green_increments(&probe)?;
    out.json(
        "green.json",
        &GreenDoc {
            gamma_hat: report.gamma(),
            gamma_hat_prime: report.gamma_prime(),
            target_gamma_prime: 0.75,
            report,
        },
    )
}

fn scaling(cfg: &RunConfig, out: &mut ArtifactSet) -> anyhow::Result<()> {
    let spec = cfg.model_spec()?;
    let ev = event(cfg)?;
    let s = cfg.solver();
    let (v, cert) = control(cfg)?;
    let cert = match cert {
        Some(c) => c,
        None => {
            // a plain control still certifies its own cost
            let endpoint = solve_skeleton(&v, &spec, &s.recording(s.steps))?.trajectory.last();
            let tgt = target(cfg)?;
            let residual = match &tgt {
                TerminalTarget::Ball { center, .. } | TerminalTarget::Exterior { center, .. } => {
                    tgt.violation(lp_norm(&endpoint.sub(center)?, 2.0)?)
                }
                TerminalTarget::Smooth { .. } => 0.0,
            };
            RateCertificate {
                cost: rate_eval(&v),
                objective: rate_eval(&v),
                control: v,
                endpoint,
                residual,
                feasible: residual <= RateOptions::<f64>::default().feasibility_tol,
                target: tgt,
                trace: OptimizerTrace { iterations: 0, final_grad_norm: 0.0, stationary: false, stages: vec![] },
                restarts: vec![],
            }
        }
    };
    out.json("certificate.json", &CertificateDoc::from_certificate(&cert)?)?;
    let opts = ScalingOptions {
        schedule: cfg.noise.epsilon.clone(),
        replicas: cfg.noise.replicas.clone(),
        is_below: cfg.scaling.is_below,
        seed: cfg.noise.seed,
        solver: s,
    };
    let report = ldp_scaling_study(&ev, &cert, &spec, &opts)?;
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r: &ScalingRow| table_row(r.epsilon, r.p_hat, r.ci_lo, r.ci_hi, r.eps_log_p, &r.method, r.replicas))
        .collect();
    out.json("scaling.json", &report)?;
    out.add("scaling.csv", table_csv(&TABLE_HEADER, &table)?);
    Ok(())
}
