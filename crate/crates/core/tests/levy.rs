mod common;

use common::{symmetric_line_integral, ts_density};
use jumpbsde::levy::{Decay, LevyMeasure};
use jumpbsde::rng::JumpStream;
use proptest::prelude::*;

fn ts() -> LevyMeasure {
    LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()
}

fn sq(e: &[f64]) -> f64 {
    (e[0] * e[0]).min(1.0)
}

#[test]
fn validate_matches_reference_quadrature() {
    let dens = ts_density(1.0, 0.5, 50.0);
    let oracle = symmetric_line_integral(&|r| (r * r).min(1.0), &dens, 0.0, 50.0);
    let report = ts().validate(8).unwrap();
    assert!(report.passed, "{report:?}");
    let rel = (report.value() - oracle).abs() / oracle;
    assert!(rel < 1e-6, "validate {} vs oracle {oracle} (rel {rel:.2e})", report.value());
}

#[test]
fn integrate_agrees_with_validate() {
    let m = ts();
    let v = m.validate(8).unwrap().value();
    let q = m.integrate(&sq, Decay::Quadratic).unwrap();
    assert!((q - v).abs() / v < 1e-6, "{q} vs {v}");
}

#[test]
fn cancelling_increments_are_not_slow_decay() {
    // even weight times an odd increment formed by subtraction: the exact
    // integral is 0 and every shell sum is rounding residue
    let m = ts();
    let mut slice = jumpbsde::Slice::new(vec![-2.7], vec![3.1], vec![41], 1).unwrap();
    slice.fill(|x, out| out[0] = x[0].cos() + 0.4);
    let h = 5.8 / 40.0;
    for n in 0..400 {
        // off-node points whose jump range stays inside one cell, where the
        // interpolant is linear and the exact integral vanishes
        let x0 = -2.7 + h * ((n % 40) as f64 + 0.25 + 0.5 * (n / 40) as f64 / 10.0);
        let u0 = slice.interpolate(0, &[x0]);
        let phi = |e: &[f64]| -e[0].abs().min(1.0) * (slice.interpolate(0, &[x0 + 0.3 * e[0].clamp(-1e-3, 1e-3)]) - u0);
        let v = m.integrate(&phi, Decay::Quadratic).unwrap();
        assert!(v.abs() < 1e-9, "x0 = {x0}: {v:e}");
    }
    // a genuinely divergent odd part is still caught by its absolute value
    let bad = |e: &[f64]| if e[0] > 0.0 { 1.0 } else { -0.5 };
    assert!(matches!(ts().integrate(&bad, Decay::Bounded), Err(jumpbsde::Error::SlowDecay { .. })));
}

#[test]
fn truncated_mass_increases_and_matches_reference() {
    let dens = ts_density(1.0, 0.5, 50.0);
    let m = ts();
    let mut prev = 0.0;
    for k in [1u32, 2, 4, 8] {
        let tm = m.truncate(k).unwrap();
        let oracle = symmetric_line_integral(&|_| 1.0, &dens, 1.0 / k as f64, 50.0);
        assert!((tm.total_mass() - oracle).abs() / oracle < 1e-6, "k={k}: {} vs {oracle}", tm.total_mass());
        assert!(tm.total_mass() > prev);
        prev = tm.total_mass();
    }
}

#[test]
fn small_jump_mass_shrinks_monotonically() {
    let m = ts();
    let dens = ts_density(1.0, 0.5, 50.0);
    let mut prev = f64::INFINITY;
    for k in [1u32, 2, 4, 8, 16, 32] {
        let r = 1.0 / k as f64;
        let tail = m.small_jump_mass(r).unwrap();
        let oracle = symmetric_line_integral(&|x| (x * x).min(1.0), &|x| if x < r { dens(x) } else { 0.0 }, 0.0, r);
        assert!((tail - oracle).abs() <= 1e-6 * oracle.max(1e-3), "k={k}: {tail} vs {oracle}");
        assert!(tail < prev);
        prev = tail;
    }
}

#[test]
fn poisson_counts_have_the_right_mean() {
    let tm = LevyMeasure::finite_uniform(2.0, 1.0, 0.5).unwrap().truncate(1000).unwrap();
    assert!((tm.total_mass() - 2.0).abs() < 1e-9);
    let n = 100_000u64;
    let counts: Vec<f64> =
        (0..n).map(|p| tm.sample_jumps(0.0, 1.0, &JumpStream::new(11, p)).unwrap().len() as f64).collect();
    let mean = common::mean(&counts);
    let half_width = 3.0 * (2.0 / n as f64).sqrt();
    assert!((mean - 2.0).abs() < half_width, "mean count {mean}");
}

#[test]
fn zero_mass_samples_nothing() {
    let tm = LevyMeasure::zero(1).unwrap().truncate(4).unwrap();
    assert!(tm.sample_jumps(0.0, 5.0, &JumpStream::new(1, 0)).unwrap().is_empty());
    let tm = LevyMeasure::finite_uniform(1.0, 3.0, 1.0).unwrap().truncate(4).unwrap();
    assert!(tm.sample_jumps(0.0, 1.0, &JumpStream::new(1, 0)).is_ok());
    assert!(tm.sample_jumps(1.0, 1.0, &JumpStream::new(1, 0)).is_err());
}

#[test]
fn sampling_is_deterministic() {
    let tm = ts().truncate(16).unwrap();
    let a = tm.sample_jumps(0.0, 1.0, &JumpStream::new(5, 9)).unwrap();
    let b = tm.sample_jumps(0.0, 1.0, &JumpStream::new(5, 9)).unwrap();
    assert_eq!(a, b);
    assert!(a.times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn coarser_truncation_is_a_thinning_of_finer() {
    let m = ts();
    let fine = m.truncate(32).unwrap();
    let coarse = m.truncate(4).unwrap();
    for p in 0..200 {
        let s = JumpStream::new(3, p);
        let f = fine.sample_jumps(0.0, 1.0, &s).unwrap();
        let c = coarse.sample_jumps(0.0, 1.0, &s).unwrap();
        assert_eq!(f.thinned(coarse.threshold()), c, "path {p}");
    }
}

/// Pearson χ² of the mark histogram against the reference law on log-spaced bins.
#[test]
fn mark_histogram_matches_truncated_law() {
    let k = 8u32;
    let tm = ts().truncate(k).unwrap();
    let dens = ts_density(1.0, 0.5, 50.0);
    let lo = 1.0 / k as f64;
    let mut edges: Vec<f64> = (0..=12).map(|i| lo * (8.0f64 * k as f64).powf(i as f64 / 12.0)).collect();
    *edges.last_mut().unwrap() = 50.0;
    let mass = tm.total_mass();
    let probs: Vec<f64> = edges
        .windows(2)
        .map(|w| symmetric_line_integral(&|_| 1.0, &|r| if r < w[1] { dens(r) } else { 0.0 }, w[0], w[1]) / mass)
        .collect();
    let mut counts = vec![0f64; probs.len()];
    let mut signs = [0f64; 2];
    let mut total = 0.0;
    let mut p = 0u64;
    while total < 100_000.0 {
        let s = tm.sample_jumps(0.0, 1.0, &JumpStream::new(21, p)).unwrap();
        for j in 0..s.len() {
            let e = s.mark(j)[0];
            let r = e.abs();
            signs[(e < 0.0) as usize] += 1.0;
            let bin = edges.partition_point(|x| *x <= r).saturating_sub(1).min(probs.len() - 1);
            counts[bin] += 1.0;
            total += 1.0;
        }
        p += 1;
    }
    let chi2: f64 = counts.iter().zip(&probs).map(|(c, q)| (c - total * q).powi(2) / (total * q)).sum();
    // 11 degrees of freedom: the 0.99 quantile is 24.72.
    assert!(chi2 < 24.72, "chi2 = {chi2}, counts {counts:?}");
    let z = (signs[0] - 0.5 * total) / (0.25 * total).sqrt();
    assert!(z.abs() < 4.0, "sign imbalance z = {z}");
}

#[test]
fn radial_measure_in_two_dimensions() {
    let m = LevyMeasure::radial(2, |r| if r <= 2.0 { 1.0 } else { 0.0 }, 2.0, 0.0).unwrap();
    let mass = m.truncate(1000).unwrap().total_mass();
    let exact = std::f64::consts::PI * (4.0 - 1e-6);
    assert!((mass - exact).abs() / exact < 1e-6, "{mass}");
    let s = m.truncate(1000).unwrap().sample_jumps(0.0, 1.0, &JumpStream::new(2, 2)).unwrap();
    for j in 0..s.len() {
        let r = s.mark(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((1e-3..=2.0).contains(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounded_integrand_is_bounded_by_mass(k in 1u32..64, a in -3.0f64..3.0, w in 0.1f64..10.0) {
        let tm = ts().truncate(k).unwrap();
        let v = tm.integrate(&|e| a * (w * e[0]).sin()).unwrap();
        prop_assert!(v.abs() <= a.abs() * tm.total_mass() * (1.0 + 1e-12));
    }

    #[test]
    fn total_mass_is_nondecreasing_in_k(k in 1u32..200) {
        let m = ts();
        prop_assert!(m.truncate(k + 1).unwrap().total_mass() >= m.truncate(k).unwrap().total_mass());
    }
}
