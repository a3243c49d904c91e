mod common;

use jumpbsde::levy::LevyMeasure;
use jumpbsde::model::{Dims, ModelSpec};
use jumpbsde::sde::{moment_check, simulate, MomentVariant, TimeGrid};
use jumpbsde::zoo::LinearAdditive;
use jumpbsde::Error;
use proptest::prelude::*;

fn plain(measure: LevyMeasure) -> ModelSpec {
    ModelSpec::new("plain", Dims::scalar(), 1.0, measure).unwrap()
}

fn grid() -> TimeGrid {
    TimeGrid::new(0.0, 1.0, 50).unwrap()
}

#[test]
fn zero_coefficients_freeze_the_state() {
    let spec = plain(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap());
    let tm = spec.measure.truncate(8).unwrap();
    let b = simulate(&spec, &tm, &[0.7], &grid(), 200, 1).unwrap();
    assert!(b.states.iter().all(|v| *v == 0.7));
    assert!(b.total_jumps() > 0);
}

#[test]
fn deterministic_drift_is_integrated_exactly() {
    let spec = plain(LevyMeasure::zero(1).unwrap()).with_drift(|_, _, o| o[0] = 1.0);
    let tm = spec.measure.truncate(1).unwrap();
    let b = simulate(&spec, &tm, &[2.0], &grid(), 10, 3).unwrap();
    for p in 0..10 {
        assert!((b.state(50, p)[0] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn brownian_terminal_law() {
    let spec = plain(LevyMeasure::zero(1).unwrap()).with_diffusion(|_, _, o| o[0] = 1.0);
    let tm = spec.measure.truncate(1).unwrap();
    let n = 100_000;
    let b = simulate(&spec, &tm, &[0.5], &grid(), n, 17).unwrap();
    let xt: Vec<f64> = (0..n).map(|p| b.state(50, p)[0]).collect();
    let m = common::mean(&xt);
    let v = common::variance(&xt);
    assert!((m - 0.5).abs() < 3.0 / (n as f64).sqrt(), "mean {m}");
    assert!((v - 1.0).abs() < 0.03, "variance {v}");
}

#[test]
fn same_seed_gives_identical_bundles_and_jumps_are_consistent() {
    let spec = LinearAdditive::default().build(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()).unwrap();
    let tm = spec.measure.truncate(16).unwrap();
    let a = simulate(&spec, &tm, &[0.0], &grid(), 500, 9).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| simulate(&spec, &tm, &[0.0], &grid(), 500, 9).unwrap());
    assert_eq!(a, b);
    assert!(a.jump_consistency(&spec) < 1e-12);
    assert_eq!(a.left_limits, a.states, "no jump lands on a grid node");
    for p in 0..a.n_paths {
        for ev in a.jumps(p) {
            assert!(ev.time > a.grid.node(ev.step) && ev.time <= a.grid.node(ev.step + 1));
        }
    }
}

#[test]
fn compensated_jumps_have_zero_mean() {
    let spec = LinearAdditive { drift: 0.0, volatility: 0.0, ..Default::default() }
        .build(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap())
        .unwrap();
    let tm = spec.measure.truncate(32).unwrap();
    let n = 40_000;
    let b = simulate(&spec, &tm, &[0.0], &grid(), n, 5).unwrap();
    let xt: Vec<f64> = (0..n).map(|p| b.state(50, p)[0]).collect();
    let se = (common::variance(&xt) / n as f64).sqrt();
    assert!(common::mean(&xt).abs() < 4.0 * se, "mean {} se {se}", common::mean(&xt));
}

#[test]
fn zero_coefficients_have_zero_moments() {
    let spec = plain(LevyMeasure::zero(1).unwrap());
    let tm = spec.measure.truncate(1).unwrap();
    let b = simulate(&spec, &tm, &[1.0], &grid(), 100, 2).unwrap();
    let r = moment_check(&b, None, 2).unwrap();
    assert!(r.moments.iter().all(|m| *m == 0.0));
    assert_eq!(r.constant, 0.0);
}

#[test]
fn brownian_running_max_moment() {
    let spec = plain(LevyMeasure::zero(1).unwrap()).with_diffusion(|_, _, o| o[0] = 1.0);
    let tm = spec.measure.truncate(1).unwrap();
    let b = simulate(&spec, &tm, &[0.0], &grid(), 100_000, 23).unwrap();
    let r = moment_check(&b, None, 2).unwrap();
    let oracle = common::brownian_abs_sup_second_moment();
    assert!((oracle - 1.8319).abs() < 1e-3, "series oracle {oracle}");
    let last = *r.moments.last().unwrap();
    assert!((last - oracle).abs() < 0.15 * oracle, "E sup|B|^2 = {last}, oracle {oracle}");
    for (s, m) in r.elapsed.iter().zip(&r.moments) {
        assert!(*m <= 4.0 * s * 1.02 + 1e-12, "Doob envelope violated at s = {s}: {m}");
    }
    assert!(r.monotone);
}

#[test]
fn identical_start_points_have_zero_difference_moments() {
    let spec = LinearAdditive::default().build(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()).unwrap();
    let tm = spec.measure.truncate(8).unwrap();
    let a = simulate(&spec, &tm, &[1.0], &grid(), 300, 4).unwrap();
    let b = simulate(&spec, &tm, &[1.0], &grid(), 300, 4).unwrap();
    let r = moment_check(&a, Some(&b), 2).unwrap();
    assert_eq!(r.variant, MomentVariant::Difference);
    assert!(r.moments.iter().all(|m| *m == 0.0));
}

#[test]
fn mismatched_bundles_are_rejected() {
    let spec = plain(LevyMeasure::zero(1).unwrap());
    let tm = spec.measure.truncate(1).unwrap();
    let a = simulate(&spec, &tm, &[1.0], &grid(), 10, 4).unwrap();
    let b = simulate(&spec, &tm, &[1.0], &TimeGrid::new(0.0, 1.0, 25).unwrap(), 10, 4).unwrap();
    assert!(matches!(moment_check(&a, Some(&b), 2), Err(Error::GridMismatch(_))));
    assert!(matches!(moment_check(&a, None, 3), Err(Error::InvalidInput(_))));
}

#[test]
fn truncation_coupling_shrinks_with_tail_mass() {
    let measure = LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap();
    let spec = LinearAdditive::default().build(measure.clone()).unwrap();
    let n = 4000;
    let fine = simulate(&spec, &measure.truncate(64).unwrap(), &[0.0], &grid(), n, 8).unwrap();
    let mut prev = f64::INFINITY;
    for k in [2u32, 4, 8, 16, 32] {
        let coarse = simulate(&spec, &measure.truncate(k).unwrap(), &[0.0], &grid(), n, 8).unwrap();
        let mut e = 0.0;
        for p in 0..n {
            let sup = (0..=50).map(|j| (coarse.state(j, p)[0] - fine.state(j, p)[0]).abs()).fold(0.0, f64::max);
            e += sup * sup;
        }
        e /= n as f64;
        // X^k − X^{64} is a compensated sum of jumps with marks in [1/64, 1/k):
        // its second moment is 0.09 ∫_{1/64≤|e|<1/k} e² dλ, and Doob bounds the sup by 4×.
        let band = measure.small_jump_mass(1.0 / k as f64).unwrap() - measure.small_jump_mass(1.0 / 64.0).unwrap();
        assert!(e <= 4.0 * 0.09 * band * 1.2 && e >= 0.09 * band * 0.8, "k={k}: e={e}, band={band}");
        assert!(e < prev);
        prev = e;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stored_jumps_satisfy_the_jump_equation(seed in 0u64..1000, x in -3.0f64..3.0) {
        let spec = jumpbsde::zoo::CoupledSine::default()
            .build(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap())
            .unwrap();
        let tm = spec.measure.truncate(8).unwrap();
        let b = simulate(&spec, &tm, &[x], &TimeGrid::new(0.0, 1.0, 10).unwrap(), 20, seed).unwrap();
        prop_assert!(b.jump_consistency(&spec) < 1e-12);
        prop_assert!((0..20).all(|p| b.state(0, p)[0] == x));
    }
}
