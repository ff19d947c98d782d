use chlab::{
    control_norm_sq, from_spectral, girsanov_log_weight, holder_modulus, holder_norm, importance_sample,
    j_decomposition, lp_norm, rate_eval, sample_sheet, shift_increments, to_spectral, ControlPath, EventSpec, Grid,
    GridField, McConfig, ModelSpec, SeedSpec, SheetConfig, SigmaPreset, SolverConfig, SpectralField, Trajectory,
    TrajectoryMeta,
};
use proptest::prelude::*;

fn field_on(grid: Grid, seed: u64, scale: f64) -> GridField<f64> {
    let z = SeedSpec::new(seed, 0).normals(grid.len());
    GridField::new(grid, z.into_iter().map(|x| scale * x).collect()).unwrap()
}

fn control_on(grid: Grid, dt: f64, steps: usize, seed: u64, scale: f64) -> ControlPath<f64> {
    let z = SeedSpec::new(seed, 1).normals(grid.len() * steps);
    ControlPath::new(grid, dt, steps, z.into_iter().map(|x| scale * x).collect()).unwrap()
}

fn path_on(grid: Grid, dt: f64, steps: usize, seed: u64) -> Trajectory<f64> {
    let z = SeedSpec::new(seed, 2).normals(grid.len() * (steps + 1));
    let states = z.chunks(grid.len()).map(|c| c.to_vec()).collect();
    Trajectory::new(grid, dt, states, TrajectoryMeta::default()).unwrap()
}

fn l2(g: &GridField<f64>) -> f64 {
    lp_norm(g, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transform_round_trip_and_parseval(n in 1usize..=256, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let g = field_on(Grid::line(n), seed, scale);
        let a = to_spectral(&g);
        let back = from_spectral(&a);
        let err = back.values.iter().zip(&g.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * scale * (n as f64).sqrt().max(1.0));
        let (na, ng) = (a.l2_norm(), l2(&g));
        prop_assert!((na - ng).abs() <= 1e-12 * ng.max(1.0));
    }

    #[test]
    fn transform_round_trip_in_two_dimensions(n in 1usize..=24, seed in any::<u64>()) {
        let g = field_on(Grid::new(2, n).unwrap(), seed, 1.0);
        let a = to_spectral(&g);
        let back = from_spectral(&a);
        let err = back.values.iter().zip(&g.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        prop_assert!((a.l2_norm() - l2(&g)).abs() < 1e-12);
    }

    #[test]
    fn semigroup_law_and_contraction(
        n in 1usize..=64, seed in any::<u64>(), t in 0.0f64..0.5, s in 0.0f64..0.5,
    ) {
        let a = to_spectral(&field_on(Grid::line(n), seed, 1.0));
        let two_steps = a.semigroup_apply(t).unwrap().semigroup_apply(s).unwrap();
        let one_step = a.semigroup_apply(t + s).unwrap();
        for (x, y) in two_steps.coeffs.iter().zip(&one_step.coeffs) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
        }
        prop_assert!(one_step.l2_norm() <= a.l2_norm() * (1.0 + 1e-15));
        // the mean mode is conserved
        prop_assert_eq!(one_step.coeffs[0], a.coeffs[0]);
    }

    #[test]
    fn lp_norm_is_a_norm(
        n in 1usize..=64, s1 in any::<u64>(), s2 in any::<u64>(), c in -10.0f64..10.0,
        p in prop_oneof![Just(1.0), Just(2.0), Just(4.0), 1.0f64..8.0, Just(f64::INFINITY)],
    ) {
        let grid = Grid::line(n);
        let (f, g) = (field_on(grid, s1, 1.0), field_on(grid, s2, 1.0));
        let nf = lp_norm(&f, p).unwrap();
        let scaled = lp_norm(&f.scale(c), p).unwrap();
        prop_assert!((scaled - c.abs() * nf).abs() <= 1e-12 * (1.0 + scaled));
        let sum = lp_norm(&f.add(&g).unwrap(), p).unwrap();
        prop_assert!(sum <= nf + lp_norm(&g, p).unwrap() + 1e-12);
    }

    #[test]
    fn shift_is_affine_in_the_control(
        seed in any::<u64>(), eps in 1e-4f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let grid = Grid::line(8);
        let (dt, steps) = (0.01, 6);
        let w = sample_sheet(&SheetConfig { grid, steps, dt }, &SeedSpec::new(seed, 0)).unwrap();
        let (v1, v2) = (control_on(grid, dt, steps, seed, 1.0), control_on(grid, dt, steps, !seed, 1.0));
        let combo = v1.scale(a).add(&v2.scale(b)).unwrap();
        let zero = ControlPath::zeros(grid, dt, steps);
        let base = shift_increments(&w, &zero, eps).unwrap();
        let s1 = shift_increments(&w, &v1, eps).unwrap();
        let s2 = shift_increments(&w, &v2, eps).unwrap();
        let sc = shift_increments(&w, &combo, eps).unwrap();
        for i in 0..base.increments.len() {
            let affine = base.increments[i] + a * (s1.increments[i] - base.increments[i])
                + b * (s2.increments[i] - base.increments[i]);
            prop_assert!((sc.increments[i] - affine).abs() < 1e-13);
        }
        prop_assert_eq!(girsanov_log_weight(&w, &zero, eps).unwrap(), 0.0);
    }

    #[test]
    fn rate_is_quadratic_and_control_norm_is_a_norm(
        s1 in any::<u64>(), s2 in any::<u64>(), c in -5.0f64..5.0,
    ) {
        let grid = Grid::line(6);
        let (v, w) = (control_on(grid, 0.02, 5, s1, 1.0), control_on(grid, 0.02, 5, s2, 1.0));
        let i = rate_eval(&v);
        prop_assert!((rate_eval(&v.scale(c)) - c * c * i).abs() <= 1e-12 * (1.0 + c * c * i));
        prop_assert!((2.0 * i - control_norm_sq(&v)).abs() <= 1e-12 * (1.0 + i));
        let norm = |x: &ControlPath<f64>| control_norm_sq(x).sqrt();
        prop_assert!(norm(&v.add(&w).unwrap()) <= norm(&v) + norm(&w) + 1e-12);
    }

    #[test]
    fn holder_increment_grows_with_alpha_on_short_horizons(
        seed in any::<u64>(), a1 in 0.01f64..0.98, gap in 0.0f64..0.5,
    ) {
        // all lags are at most T < 1, so |t − t'|^α decreases in α
        let traj = path_on(Grid::line(4), 0.05, 12, seed);
        let a2 = (a1 + gap).min(0.99);
        let h1 = holder_norm(&traj, a1, 2.0).unwrap();
        let h2 = holder_norm(&traj, a2, 2.0).unwrap();
        prop_assert_eq!(h1.sup_term, h2.sup_term);
        prop_assert!(h1.increment_term <= h2.increment_term * (1.0 + 1e-14));
    }

    #[test]
    fn holder_modulus_is_monotone_in_the_window(seed in any::<u64>(), lag in 2usize..10) {
        let traj = path_on(Grid::line(3), 0.1, 10, seed);
        let short = holder_modulus(&traj, 0.25, 4.0, 0.1 * lag as f64).unwrap();
        let long = holder_modulus(&traj, 0.25, 4.0, 0.1 * (lag + 1) as f64).unwrap();
        let full = holder_norm(&traj, 0.25, 4.0).unwrap().increment_term;
        prop_assert!(short <= long && long <= full * (1.0 + 1e-14));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn j_decomposition_closes_and_j4_vanishes_for_constant_sigma(
        seed in any::<u64>(), eps in 1e-4f64..0.1, amp in 0.0f64..1.0,
    ) {
        let grid = Grid::line(16);
        let (dt, steps) = (1e-3, 40);
        let spec = ModelSpec::default_on(grid)
            .with_u0(GridField::from_fn(grid, |x: &[f64]| 0.3 * x[0].cos()))
            .with_sigma(SigmaPreset::Constant { s0: 0.7 });
        let config = SolverConfig::new(dt, steps);
        let w = sample_sheet(&SheetConfig { grid, steps, dt }, &SeedSpec::new(seed, 0)).unwrap();
        let v = control_on(grid, dt, steps, seed, amp);
        let v_eps = v.add(&control_on(grid, dt, steps, !seed, 0.1)).unwrap();
        let skel = chlab::solve_skeleton(&v, &spec, &config).unwrap().trajectory;
        let ctrl = chlab::solve_stochastic(&w, Some(&v_eps), eps, &spec, &config).unwrap();
        let dec = j_decomposition(&ctrl, &skel, &w, &v_eps, &v, eps, &spec, 2.0).unwrap();
        prop_assert!(dec.residual < 1e-10, "residual {}", dec.residual);
        prop_assert!(dec.j4.iter().all(|&x| x.abs() < 1e-14));
        prop_assert_eq!(dec.j1.len(), steps + 1);
    }

    #[test]
    fn j4_is_active_for_state_dependent_sigma(seed in any::<u64>()) {
        let grid = Grid::line(8);
        let (dt, steps) = (1e-3, 20);
        let spec = ModelSpec::default_on(grid)
            .with_u0(GridField::from_fn(grid, |x: &[f64]| 0.3 * x[0].cos()))
            .with_sigma(SigmaPreset::BoundedRational { s0: 1.0 });
        let config = SolverConfig::new(dt, steps);
        let w = sample_sheet(&SheetConfig { grid, steps, dt }, &SeedSpec::new(seed, 0)).unwrap();
        let v = control_on(grid, dt, steps, seed, 1.0);
        let skel = chlab::solve_skeleton(&v, &spec, &config).unwrap().trajectory;
        let ctrl = chlab::solve_stochastic(&w, Some(&v), 0.05, &spec, &config).unwrap();
        let dec = j_decomposition(&ctrl, &skel, &w, &v, &v, 0.05, &spec, 2.0).unwrap();
        prop_assert!(dec.residual < 1e-10);
        prop_assert!(dec.j3.iter().all(|&x| x.abs() < 1e-14));
        prop_assert!(dec.j4.iter().any(|&x| x > 0.0));
    }

    #[test]
    fn importance_estimates_respect_nested_events(seed in any::<u64>(), d1 in 0.0f64..0.3, gap in 0.0f64..0.3) {
        let grid = Grid::line(8);
        let solver = SolverConfig::new(0.01, 10);
        let spec = ModelSpec::linear(GridField::zeros(grid), SigmaPreset::Constant { s0: 1.0 });
        let mc = McConfig { solver, replicas: 64, seed, level: 0 };
        let v = ControlPath::from_fn(grid, 0.01, 10, |_: f64, x: &[f64]| 0.5 * x[0].cos());
        let center = GridField::zeros(grid);
        let inner = EventSpec::terminal_ball(center.clone(), d1 + gap);
        let outer = EventSpec::terminal_ball(center, d1);
        let p_inner = importance_sample(&inner, 0.1, &v, &spec, &mc).unwrap();
        let p_outer = importance_sample(&outer, 0.1, &v, &spec, &mc).unwrap();
        prop_assert!(p_inner.p_hat <= p_outer.p_hat);
        prop_assert!(p_inner.hits <= p_outer.hits);
    }
}

#[test]
fn spectral_field_norm_matches_grid_norm_for_a_mode() {
    let grid = Grid::line(32);
    let a = SpectralField::<f64>::mode(grid, [3, 0], 2.5);
    assert!((a.l2_norm() - 2.5).abs() < 1e-15);
    assert!((l2(&from_spectral(&a)) - 2.5).abs() < 1e-12);
}
