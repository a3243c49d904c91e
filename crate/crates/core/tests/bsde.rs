use jumpbsde::bsde::{picard_subinterval, solve_frozen_nonlocal, solve_lsmc, truncation_study, WindowLength};
use jumpbsde::sde::simulate;
use jumpbsde::zoo::{CoupledSine, LinearAdditive};
use jumpbsde::{Basis, Error, Field, FnField, LevyMeasure, ModelSpec, PathBundle, QEstimator, SolverSettings, TimeGrid};

fn ts() -> LevyMeasure {
    LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()
}

fn paths(spec: &ModelSpec, k: u32, x: f64, steps: usize, n: usize, seed: u64) -> PathBundle {
    let grid = TimeGrid::new(0.0, spec.horizon, steps).unwrap();
    simulate(spec, &spec.measure.truncate(k).unwrap(), &[x], &grid, n, seed).unwrap()
}

fn linear() -> ModelSpec {
    LinearAdditive::default().build(ts()).unwrap()
}

#[test]
fn frozen_dynamics_keep_the_terminal_value() {
    let spec = LinearAdditive { drift: 0.0, volatility: 0.0, jump_scale: 0.0, ..Default::default() }.build(ts()).unwrap();
    let b = paths(&spec, 4, 0.7, 10, 2000, 1);
    let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    for j in 0..=10 {
        for p in (0..2000).step_by(97) {
            assert!((sol.y_at(j, p, 0) - 0.7).abs() < 1e-12);
        }
    }
    assert!(sol.z.iter().flatten().all(|z| z.abs() < 1e-9));
    assert!(sol.q.iter().flatten().all(|q| q.abs() < 1e-12));
}

#[test]
fn constant_generator_integrates_in_time() {
    let spec = LinearAdditive::default()
        .build(ts())
        .unwrap()
        .with_terminal(0, |_| 0.0)
        .with_generator(0, |_, _, _, _, _| 0.8);
    let b = paths(&spec, 8, 0.0, 20, 4000, 2);
    let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    for j in 0..=20 {
        let expect = 0.8 * (1.0 - b.grid.node(j));
        for p in (0..4000).step_by(131) {
            assert!((sol.y_at(j, p, 0) - expect).abs() < 1e-3, "node {j}");
        }
    }
}

#[test]
fn linear_model_matches_closed_form_within_three_errors() {
    let spec = linear();
    for x in [-1.0, 1.0] {
        let b = paths(&spec, 32, x, 50, 20_000, 3);
        let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
        let est = sol.estimates[0];
        let exact = x + 0.1;
        assert!((est.value - exact).abs() <= 3.0 * est.std_error, "x={x}: {est:?}");
        // terminal condition holds path by path
        let xt = b.states_at(50);
        assert!((0..b.n_paths).all(|p| sol.y_at(50, p, 0) == xt[p]));
        assert_eq!(sol.grid.t0, 0.0);
    }
}

#[test]
fn solver_grid_starts_at_the_requested_time() {
    let spec = linear();
    let grid = TimeGrid::new(0.4, 1.0, 12).unwrap();
    let b = simulate(&spec, &spec.measure.truncate(8).unwrap(), &[0.2], &grid, 4000, 4).unwrap();
    let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    assert_eq!(sol.grid.t0, 0.4);
    assert_eq!(sol.fields.times[0], 0.4);
    let est = sol.estimates[0];
    assert!((est.value - (0.2 + 0.1 * 0.6)).abs() <= 3.0 * est.std_error);
}

#[test]
fn regressed_field_tracks_pathwise_values() {
    let spec = linear();
    let b = paths(&spec, 16, 0.0, 20, 10_000, 5);
    let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    for j in [5usize, 10, 19] {
        let t = b.grid.node(j);
        let slice = &sol.fields.slices[j];
        let worst = (0..b.n_paths)
            .filter(|&p| slice.contains(b.state(j, p)))
            .map(|p| (sol.value(0, t, b.state(j, p)) - sol.y_at(j, p, 0)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-3, "node {j}: {worst}");
    }
}

#[test]
fn oversized_basis_is_rejected() {
    let spec = linear();
    let b = paths(&spec, 4, 0.0, 4, 60, 6);
    let err = solve_lsmc(&spec, &b, &SolverSettings { basis: Basis::Polynomial { degree: 4 }, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "{err}");
}

#[test]
fn lattice_valued_states_make_the_regression_singular() {
    // pure jumps of fixed size: X_j takes a handful of values
    let m = LevyMeasure::finite_uniform(0.5, 1.2, 1.0).unwrap();
    let spec = LinearAdditive { drift: 0.0, volatility: 0.0, jump_scale: 1.0, ..Default::default() }.build(m).unwrap();
    let b = paths(&spec, 4, 0.0, 10, 5000, 7);
    let err = solve_lsmc(&spec, &b, &SolverSettings { basis: Basis::Polynomial { degree: 8 }, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::SingularRegression { .. }), "{err}");
}

#[test]
fn estimators_agree_on_finite_activity() {
    let m = LevyMeasure::finite_uniform(2.0, 1.0, 0.5).unwrap();
    let spec = CoupledSine::default().build(m).unwrap();
    let b = paths(&spec, 4, 0.0, 20, 40_000, 8);
    let rep = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    let mart = solve_lsmc(&spec, &b, &SolverSettings { estimator: QEstimator::Martingale, ..Default::default() }).unwrap();
    let tol = rep.regression_tolerance + mart.regression_tolerance;
    for i in 0..2 {
        let (a, c) = (rep.estimates[i], mart.estimates[i]);
        let se = (a.std_error.powi(2) + c.std_error.powi(2)).sqrt();
        assert!((a.value - c.value).abs() <= tol + 3.0 * se, "component {i}: {a:?} vs {c:?} (tol {tol})");
    }
}

#[test]
fn martingale_estimator_requires_gamma_coupling() {
    let spec = jumpbsde::zoo::NormCouplingDemo::default().build(ts()).unwrap();
    let b = paths(&spec, 4, 0.0, 4, 2000, 9);
    let err = solve_lsmc(&spec, &b, &SolverSettings { estimator: QEstimator::Martingale, ..Default::default() }).unwrap_err();
    assert!(matches!(err, Error::EstimatorUnavailable(_)));
}

#[test]
fn picard_without_z_or_q_dependence_needs_one_iteration() {
    let spec = linear().with_generator(0, |_, x, y, _, _| 0.1 * x[0] - 0.2 * y[0]);
    let b = paths(&spec, 8, 0.0, 20, 5000, 10);
    let sol = picard_subinterval(&spec, &b, &SolverSettings::default(), WindowLength::Fixed(0.25)).unwrap();
    assert_eq!(sol.windows.len(), 4);
    assert!(sol.picard_iterations_used().iter().all(|n| *n == 1), "{:?}", sol.windows);
}

#[test]
fn single_window_picard_matches_direct_solve() {
    let spec = CoupledSine::default().build(ts()).unwrap();
    let b = paths(&spec, 8, 0.3, 20, 8000, 11);
    let direct = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    let pic = picard_subinterval(&spec, &b, &SolverSettings::default(), WindowLength::Fixed(5.0)).unwrap();
    assert_eq!(pic.windows.len(), 1);
    for i in 0..2 {
        let d = (direct.estimates[i].value - pic.estimates[i].value).abs();
        assert!(d < 1e-5, "component {i}: {d}");
    }
}

#[test]
fn auto_windows_contract() {
    let spec = CoupledSine::default().build(ts()).unwrap();
    let b = paths(&spec, 8, 0.0, 20, 8000, 12);
    let sol = picard_subinterval(&spec, &b, &SolverSettings::default(), WindowLength::Auto).unwrap();
    assert!(sol.windows.len() > 1);
    for w in &sol.windows {
        assert!(w.contraction_ratio.unwrap_or(0.0) <= 0.6, "{w:?}");
    }
}

#[test]
fn null_frozen_field_equals_null_weights() {
    let spec = CoupledSine::default().build(ts()).unwrap();
    let b = paths(&spec, 8, 0.0, 10, 4000, 13);
    let zero = FnField::new(2, 1, |_, _, _: &[f64]| 0.0);
    let frozen = solve_frozen_nonlocal(&spec, &b, &SolverSettings::default(), &zero).unwrap();
    let unweighted = spec.clone().with_weight(0, |_, _, _| 0.0).with_weight(1, |_, _, _| 0.0);
    let direct = solve_lsmc(&unweighted, &b, &SolverSettings::default()).unwrap();
    assert_eq!(frozen.y, direct.y);
}

#[test]
fn exact_frozen_field_is_a_fixed_point() {
    let spec = linear();
    let b = paths(&spec, 16, 0.5, 20, 10_000, 14);
    let exact = FnField::new(1, 1, |_, t, x: &[f64]| x[0] + 0.1 * (1.0 - t));
    let sol = solve_frozen_nonlocal(&spec, &b, &SolverSettings::default(), &exact).unwrap();
    let dist = sol.fields.sup_distance(&exact);
    assert!(dist <= 2.0 * sol.regression_tolerance + 1e-9, "{dist} vs {}", sol.regression_tolerance);
}

#[test]
fn unused_channel_ignores_the_frozen_field() {
    let spec = linear();
    let b = paths(&spec, 8, 0.0, 10, 4000, 15);
    let a = solve_frozen_nonlocal(&spec, &b, &SolverSettings::default(), &FnField::new(1, 1, |_, _, x: &[f64]| x[0].sin())).unwrap();
    let c = solve_frozen_nonlocal(&spec, &b, &SolverSettings::default(), &FnField::new(1, 1, |_, _, x: &[f64]| 3.0 * x[0] * x[0])).unwrap();
    assert_eq!(a.y, c.y);
}

#[test]
fn truncation_is_inert_without_small_jumps() {
    let m = LevyMeasure::finite_uniform(1.0, 2.0, 1.0).unwrap();
    let spec = LinearAdditive::default().build(m).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let table = truncation_study(&spec, &[0.0], &grid, &[1, 2, 4], 3000, 16, &SolverSettings::default()).unwrap();
    for r in &table.rows {
        assert!(r.e_x < 1e-20 && r.e_y < 1e-20 && r.e_u < 1e-20, "{r:?}");
        assert_eq!(r.tail_mass, 0.0);
    }
    let z = LinearAdditive::default().build(LevyMeasure::zero(1).unwrap()).unwrap();
    let table = truncation_study(&z, &[0.0], &grid, &[1, 2], 3000, 16, &SolverSettings::default()).unwrap();
    assert!(table.rows.iter().all(|r| r.e_x == 0.0 && r.e_y == 0.0 && r.e_u == 0.0));
}

#[test]
fn truncation_errors_shrink_with_the_tail() {
    let spec = linear();
    let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
    let t = truncation_study(&spec, &[0.0], &grid, &[2, 4, 8, 16], 4000, 17, &SolverSettings::default()).unwrap();
    assert!(t.monotone_x && t.monotone_y, "{t:#?}");
    assert!(t.spearman_x >= 0.9, "{t:#?}");
    for r in &t.rows {
        assert!(r.e_x <= t.constant * r.tail_mass * (1.0 + 1e-12));
    }
}

#[test]
fn value_fields_are_total() {
    let spec = linear();
    let b = paths(&spec, 8, 0.0, 10, 4000, 18);
    let sol = solve_lsmc(&spec, &b, &SolverSettings::default()).unwrap();
    for x in [-1e6, -30.0, 0.0, 30.0, 1e6] {
        for t in [0.0, 0.33, 1.0] {
            assert!(sol.fields.value(0, t, &[x]).is_finite());
        }
    }
    assert!(sol.fields.envelope_holds());
}
