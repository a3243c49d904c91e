mod common;

use common::{radial_integral, symmetric_line_integral, ts_density};
use jumpbsde::model::{Dims, ModelSpec};
use jumpbsde::nonlocal::{eval_b, eval_b_norm, eval_k, STENCIL_TOLERANCE};
use jumpbsde::zoo::LinearAdditive;
use jumpbsde::{Error, Field, FnField, LevyMeasure, ValueField};
use proptest::prelude::*;

const C: f64 = 0.3;

fn spec() -> ModelSpec {
    let m = LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap();
    LinearAdditive { jump_scale: C, ..Default::default() }.build(m).unwrap()
}

/// c²∫(1∧|e|)²dλ for the 1D tempered-stable measure.
fn jump_variance() -> f64 {
    C * C * symmetric_line_integral(&|r| (r * r).min(1.0), &ts_density(1.0, 0.5, 50.0), 0.0, 50.0)
}

fn identity() -> impl Field {
    FnField::new(1, 1, |_, _, x: &[f64]| x[0])
}

#[test]
fn gamma_integral_of_identity_matches_oracle() {
    let s = spec();
    // γ·Δu = (1∧|e|)·c(1∧|e|)
    let oracle = jump_variance() / C;
    for x in [-1.0, 0.0, 2.5] {
        let b = eval_b(&identity(), 0, &s, 0.3, &[x]).unwrap();
        assert!((b - oracle).abs() / oracle < 1e-6, "x={x}: {b} vs {oracle}");
    }
    let lattice = ValueField::from_fn(&[0.0, 1.0], &[-4.0], &[4.0], &[161], 1, |_, _, x| x[0]).unwrap();
    let b = eval_b(&lattice, 0, &s, 0.5, &[0.37]).unwrap();
    assert!((b - oracle).abs() / oracle < 1e-6, "lattice {b} vs {oracle}");
}

#[test]
fn norm_variant_of_identity_matches_oracle() {
    let s = spec();
    let oracle = jump_variance().sqrt();
    let b = eval_b_norm(&identity(), 0, &s, 0.0, &[1.0]).unwrap();
    assert!((b - oracle).abs() / oracle < 1e-6, "{b} vs {oracle}");
}

#[test]
fn compensated_operator_of_square_is_jump_variance() {
    let s = spec();
    let sq = FnField::new(1, 1, |_, _, x: &[f64]| x[0] * x[0]);
    let oracle = jump_variance();
    for x in [-2.0, 0.0, 0.7, 3.0] {
        let k = eval_k(&sq, &s, 0.0, &[x], 0).unwrap();
        assert!((k - oracle).abs() / oracle < 1e-6, "x={x}: {k} vs {oracle}");
    }
}

#[test]
fn compensated_operator_in_two_dimensions() {
    // β(e) = c·e·min(1, 1/|e|), λ radial with unit density on |e| ≤ 2, u = |x|².
    let m = LevyMeasure::radial(2, |r| if r <= 2.0 { 1.0 } else { 0.0 }, 2.0, 0.0).unwrap();
    let dims = Dims { state: 2, brownian: 2, system: 1, mark: 2 };
    let s = ModelSpec::new("radial2", dims, 1.0, m).unwrap().with_jump(
        |_, _, e, o| {
            let r = (e[0] * e[0] + e[1] * e[1]).sqrt();
            let f = if r > 1.0 { C / r } else { C };
            o[0] = f * e[0];
            o[1] = f * e[1];
        },
        true,
    );
    let u = FnField::new(1, 2, |_, _, x: &[f64]| x[0] * x[0] + x[1] * x[1]);
    let oracle = 2.0 * std::f64::consts::PI * radial_integral(&|r| C * C * (r * r).min(1.0) * r, 0.0, 1.0, 1e-14)
        + 2.0 * std::f64::consts::PI * radial_integral(&|r| C * C * r, 1.0, 2.0, 1e-14);
    let k = eval_k(&u, &s, 0.0, &[0.5, -0.25], 0).unwrap();
    assert!((k - oracle).abs() / oracle < 1e-6, "{k} vs {oracle}");
}

#[test]
fn null_measure_and_null_weight_give_zero() {
    let z = LinearAdditive::default().build(LevyMeasure::zero(1).unwrap()).unwrap();
    let sq = FnField::new(1, 1, |_, _, x: &[f64]| x[0] * x[0]);
    assert_eq!(eval_b(&sq, 0, &z, 0.0, &[1.0]).unwrap(), 0.0);
    assert_eq!(eval_b_norm(&sq, 0, &z, 0.0, &[1.0]).unwrap(), 0.0);
    assert_eq!(eval_k(&sq, &z, 0.0, &[1.0], 0).unwrap(), 0.0);

    let s = spec().with_weight(0, |_, _, _| 0.0);
    assert_eq!(eval_b(&sq, 0, &s, 0.0, &[1.0]).unwrap(), 0.0);
}

#[test]
fn lattice_refinement_stabilises_compensated_operator() {
    let s = spec();
    let exact = eval_k(&FnField::new(1, 1, |_, _, x: &[f64]| x[0].sin()), &s, 0.0, &[0.4], 0).unwrap();
    let mut errors = Vec::new();
    let mut values = Vec::new();
    for n in [201usize, 401, 801] {
        let f = ValueField::from_fn(&[0.0], &[-4.0], &[4.0], &[n], 1, |_, _, x| x[0].sin()).unwrap();
        let k = eval_k(&f, &s, 0.0, &[0.4], 0).unwrap();
        errors.push((k - exact).abs());
        values.push(k);
    }
    assert!(errors[2] < errors[1] && errors[1] < errors[0], "{errors:?}");
    for w in values.windows(2) {
        assert!((w[1] - w[0]).abs() < STENCIL_TOLERANCE * exact.abs().max(1.0), "{values:?}");
    }
}

#[test]
fn noisy_lattice_is_rejected() {
    let s = spec();
    let f = ValueField::from_fn(&[0.0], &[-1.0], &[1.0], &[101], 1, |_, _, x| {
        x[0] + 0.05 * ((x[0] * 1e4).sin() * 1e3).sin()
    })
    .unwrap();
    let err = eval_k(&f, &s, 0.0, &[0.1], 0).unwrap_err();
    assert!(matches!(err, Error::IllConditionedDerivative { .. }), "{err}");
}

fn mix(a: f64, w: f64, b: f64) -> impl Field {
    FnField::new(1, 1, move |_, t, x: &[f64]| a * (w * x[0] + t).sin() + b * x[0] * x[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operators_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.2f64..2.0, x in -3.0f64..3.0, t in 0.0f64..1.0) {
        let s = spec();
        let u = mix(1.0, w, 0.0);
        let v = mix(0.0, w, 1.0);
        let uv = mix(a, w, b);
        let lhs_b = eval_b(&uv, 0, &s, t, &[x]).unwrap();
        let rhs_b = a * eval_b(&u, 0, &s, t, &[x]).unwrap() + b * eval_b(&v, 0, &s, t, &[x]).unwrap();
        prop_assert!((lhs_b - rhs_b).abs() <= 1e-9 * (1.0 + rhs_b.abs()));
        let lhs_k = eval_k(&uv, &s, t, &[x], 0).unwrap();
        let rhs_k = a * eval_k(&u, &s, t, &[x], 0).unwrap() + b * eval_k(&v, &s, t, &[x], 0).unwrap();
        prop_assert!((lhs_k - rhs_k).abs() <= 1e-9 * (1.0 + rhs_k.abs()));
    }

    #[test]
    fn affine_fields_have_no_compensated_part(slope in -5.0f64..5.0, shift in -5.0f64..5.0, x in -10.0f64..10.0, t in 0.0f64..1.0) {
        let s = spec();
        let f = FnField::new(1, 1, move |_, _, y: &[f64]| slope * y[0] + shift);
        let k = eval_k(&f, &s, t, &[x], 0).unwrap();
        prop_assert!(k.abs() < 1e-9 * (1.0 + slope.abs()));
    }

    #[test]
    fn gamma_integral_ignores_constants(c in -100.0f64..100.0, w in 0.2f64..2.0, x in -3.0f64..3.0) {
        let s = spec();
        let base = eval_b(&mix(1.0, w, 0.5), 0, &s, 0.0, &[x]).unwrap();
        let shifted = FnField::new(1, 1, move |_, t, y: &[f64]| (w * y[0] + t).sin() + 0.5 * y[0] * y[0] + c);
        let moved = eval_b(&shifted, 0, &s, 0.0, &[x]).unwrap();
        prop_assert!((base - moved).abs() < 1e-9 * (1.0 + c.abs()));
    }
}
