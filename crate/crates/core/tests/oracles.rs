use std::f64::consts::PI;

use chlab::spectral::IncrementIntegrals;
use chlab::stats::ols;
use chlab::{
    green_kernel_eval, j_decomposition, lp_norm, moment_diagnostic, sample_sheet, solve_skeleton, solve_stochastic,
    ControlPath, Grid, GridField, ModelSpec, NoisePath, SeedSpec, SheetConfig, SigmaPreset, SolverConfig,
};

fn mode(k: usize, x: f64) -> f64 {
    if k == 0 {
        PI.powf(-0.5)
    } else {
        (2.0 / PI).sqrt() * (k as f64 * x).cos()
    }
}

/// `∫ₐᵇ e^{−2λr} dr`.
fn exp_integral(lambda: f64, a: f64, b: f64) -> f64 {
    if lambda == 0.0 {
        b - a
    } else {
        ((-2.0 * lambda * a).exp() - (-2.0 * lambda * b).exp()) / (2.0 * lambda)
    }
}

#[test]
fn increment_integrals_match_closed_forms() {
    let k_max = 64;
    let integ = IncrementIntegrals::<f64>::new(k_max, 2000).unwrap();
    let lam = |k: usize| (k * k * k * k) as f64;
    let (y, t) = (1.0, 0.5);
    for z in [1.001, 1.01, 1.3] {
        let exact: f64 = (0..=k_max).map(|k| (mode(k, y) - mode(k, z)).powi(2) * exp_integral(lam(k), 0.0, t)).sum();
        let got = integ.spatial(y, z, t);
        assert!((got - exact).abs() <= 2e-3 * exact, "spatial z={z}: {got} vs {exact}");
    }
    for h in [1e-4, 1e-2] {
        let exact: f64 = (0..=k_max)
            .map(|k| mode(k, y).powi(2) * ((-lam(k) * h).exp() - 1.0).powi(2) * exp_integral(lam(k), 0.0, t))
            .sum();
        let got = integ.temporal(y, h, t);
        assert!((got - exact).abs() <= 2e-3 * exact, "temporal h={h}: {got} vs {exact}");
    }
    for (s, tt) in [(0.0, 1e-3), (0.1, 0.3)] {
        let exact: f64 = (0..=k_max).map(|k| mode(k, y).powi(2) * exp_integral(lam(k), s, tt)).sum();
        let got = integ.square(y, s, tt);
        assert!((got - exact).abs() <= 2e-3 * exact, "square [{s},{tt}]: {got} vs {exact}");
    }
}

#[test]
fn kernel_conserves_mass_under_midpoint_quadrature() {
    // the midpoint rule on n points integrates cos(kx) exactly for 0 < k < 2n
    let n = 64;
    let h = PI / n as f64;
    for t in [1e-4, 1e-2, 1.0] {
        for y in [0.0, 0.7, PI] {
            let total: f64 = (0..n)
                .map(|j| h * green_kernel_eval(t, &[(j as f64 + 0.5) * h], &[y], 2 * n - 1).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "t={t} y={y}: {total}");
        }
    }
    let v = green_kernel_eval(0.3, &[0.4, 1.1], &[2.0, 0.2], 16).unwrap();
    let direct: f64 = (0..=16)
        .flat_map(|a| (0..=16).map(move |b| (a, b)))
        .map(|(a, b)| {
            let mu = (a * a + b * b) as f64;
            (-mu * mu * 0.3).exp() * mode(a, 0.4) * mode(a, 2.0) * mode(b, 1.1) * mode(b, 0.2)
        })
        .sum();
    assert!((v - direct).abs() < 1e-14);
}

#[test]
fn sheet_increments_have_the_cell_variance_and_no_correlation() {
    let grid = Grid::line(32);
    let cfg = SheetConfig { grid, steps: 2000, dt: 1e-3 };
    let w = sample_sheet(&cfg, &SeedSpec::new(11, 0)).unwrap();
    let var = w.cell_variance();
    let n = w.increments.len() as f64;
    let m2 = w.increments.iter().map(|x| x * x).sum::<f64>() / n;
    // sample variance has relative sd sqrt(2/N) ≈ 0.0056
    assert!((m2 / var - 1.0).abs() < 0.02, "variance ratio {}", m2 / var);
    let mean = w.increments.iter().sum::<f64>() / n;
    assert!(mean.abs() < 4.0 * (var / n).sqrt());
    let lagged = |a: usize| {
        let pairs: Vec<f64> = (0..cfg.steps)
            .flat_map(|m| {
                let s = w.slice(m);
                (0..grid.len() - a).map(move |j| s[j] * s[j + a])
            })
            .collect();
        pairs.iter().sum::<f64>() / pairs.len() as f64 / var
    };
    assert!(lagged(1).abs() < 0.02 && lagged(5).abs() < 0.02);
    let across: f64 = (0..cfg.steps - 1).map(|m| w.slice(m)[3] * w.slice(m + 1)[3]).sum::<f64>() / (cfg.steps as f64 - 1.0);
    assert!((across / var).abs() < 0.1);
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / 2f64.sqrt())
}

#[test]
fn coarsened_sheet_is_gaussian_with_the_coarse_variance() {
    let grid = Grid::line(16);
    let fine: NoisePath<f64> = sample_sheet(&SheetConfig { grid, steps: 4096, dt: 1e-4 }, &SeedSpec::new(3, 0)).unwrap();
    let coarse = fine.coarsen(8).unwrap();
    assert_eq!(coarse.steps, 512);
    assert!((coarse.dt - 8e-4).abs() < 1e-18);
    let sd = coarse.cell_variance().sqrt();
    let mut z: Vec<f64> = coarse.increments.iter().map(|x| x / sd).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let ks = z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal_cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov statistic
    assert!(ks < 1.63 / n.sqrt(), "KS statistic {ks}");
}

fn refine(v: &ControlPath<f64>, factor: usize) -> ControlPath<f64> {
    let len = v.grid.len();
    let values = (0..v.steps * factor).flat_map(|m| v.slice(m / factor).to_vec()).collect::<Vec<_>>();
    assert_eq!(values.len(), len * v.steps * factor);
    ControlPath::new(v.grid, v.dt / factor as f64, v.steps * factor, values).unwrap()
}

fn skeleton_endpoint(spec: &ModelSpec<f64>, v: &ControlPath<f64>) -> GridField<f64> {
    solve_skeleton(v, spec, &SolverConfig::new(v.dt, v.steps)).unwrap().trajectory.last()
}

#[test]
fn linear_skeleton_is_exact_for_piecewise_constant_controls() {
    let grid = Grid::line(16);
    let spec = ModelSpec::linear(GridField::from_fn(grid, |x: &[f64]| 0.2 * x[0].cos()), SigmaPreset::Constant {
        s0: 1.0,
    });
    let v = ControlPath::from_fn(grid, 0.01, 20, |t: f64, x: &[f64]| (3.0 * t).sin() + (2.0 * x[0]).cos());
    let coarse = skeleton_endpoint(&spec, &v);
    let fine = skeleton_endpoint(&spec, &refine(&v, 16));
    let diff = lp_norm(&coarse.sub(&fine).unwrap(), 2.0).unwrap();
    assert!(diff < 1e-13, "{diff}");
}

#[test]
fn cubic_skeleton_converges_at_first_order() {
    let grid = Grid::line(32);
    let spec = ModelSpec::default_on(grid).with_u0(GridField::from_fn(grid, |x: &[f64]| 0.5 * x[0].cos()));
    let v = ControlPath::from_fn(grid, 0.02, 25, |t: f64, x: &[f64]| (1.0 - t) * (2.0 * x[0]).cos());
    let reference = skeleton_endpoint(&spec, &refine(&v, 256));
    let errors: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&f| lp_norm(&skeleton_endpoint(&spec, &refine(&v, f)).sub(&reference).unwrap(), 2.0).unwrap())
        .collect();
    let (slope, _) = ols(
        &[1f64, 2.0, 4.0, 8.0, 16.0].map(|f: f64| (0.02 / f).ln()),
        &errors.iter().map(|e| e.ln()).collect::<Vec<_>>(),
    )
    .unwrap();
    assert!((slope - 1.0).abs() < 0.15, "order {slope}, errors {errors:?}");
    // the Δt/16 solve is the fine-step oracle of the coarse one
    assert!(errors[0] < 0.05 * lp_norm(&reference, 2.0).unwrap());
}

#[test]
fn moment_diagnostic_is_stable_under_grid_refinement() {
    let sup = |n: usize| {
        let grid = Grid::line(n);
        let spec = ModelSpec::default_on(grid);
        let config = SolverConfig::new(1e-4, 1000).recording(10);
        let trajs: Vec<_> = (0..20)
            .map(|r| {
                let w = sample_sheet(&SheetConfig { grid, steps: 1000, dt: 1e-4 }, &SeedSpec::new(5, r)).unwrap();
                solve_stochastic(&w, None, 0.01, &spec, &config).unwrap()
            })
            .collect();
        moment_diagnostic(&trajs, 4.0, 4.0).unwrap()
    };
    let values: Vec<f64> = [16, 32, 64].map(sup).to_vec();
    assert!(values.iter().all(|v| v.is_finite() && *v > 0.0));
    let (lo, hi) = values.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi / lo < 2.0, "{values:?}");
}

#[test]
fn stochastic_convolution_scales_like_root_epsilon() {
    let grid = Grid::line(16);
    let (dt, steps) = (1e-3, 200);
    let spec = ModelSpec::default_on(grid);
    let config = SolverConfig::new(dt, steps);
    let v = ControlPath::from_fn(grid, dt, steps, |_: f64, x: &[f64]| 0.5 * x[0].cos());
    let skel = solve_skeleton(&v, &spec, &config).unwrap().trajectory;
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut sups = vec![];
    for &e in &eps {
        let mut total = 0.0;
        for r in 0..8 {
            let w: NoisePath<f64> = sample_sheet(&SheetConfig { grid, steps, dt }, &SeedSpec::new(21, r)).unwrap();
            let u = solve_stochastic(&w, Some(&v), e, &spec, &config).unwrap();
            let dec = j_decomposition(&u, &skel, &w, &v, &v, e, &spec, 4.0).unwrap();
            assert!(dec.residual < 1e-10);
            total += dec.j1.iter().fold(0.0f64, |m, &x| m.max(x));
        }
        sups.push(total / 8.0);
    }
    let (slope, _) =
        ols(&eps.map(f64::ln), &sups.iter().map(|s| s.ln()).collect::<Vec<_>>()).unwrap();
    assert!((slope - 0.5).abs() < 0.05, "slope {slope}, sups {sups:?}");
}
