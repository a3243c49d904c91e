//! Nonlocal operators of the integro-differential system evaluated on fields:
//!
//! * `B_i u(t,x) = ∫ γ_i(t,x,e) [u^i(t,x+β) − u^i(t,x)] λ(de)`
//! * `K u^i(t,x) = ∫ [u^i(t,x+β) − u^i(t,x) − βᵀ D_x u^i(t,x)] λ(de)`
//! * the norm variant `(∫ |u^i(t,x+β) − u^i(t,x)|² λ(de))^{1/2}`.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::levy::{Decay, JumpMeasure};
use crate::model::{CouplingMode, ModelSpec};

/// Relative disagreement allowed between the h and 2h derivative stencils.
pub const STENCIL_TOLERANCE: f64 = 1e-3;

fn increment<'a>(
    u: &'a dyn Field,
    i: usize,
    spec: &'a ModelSpec,
    t: f64,
    x: &'a [f64],
    u0: f64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    let k = x.len();
    let scratch = RefCell::new((vec![0.0; k], vec![0.0; k]));
    move |e: &[f64]| {
        let mut s = scratch.borrow_mut();
        let (beta, xe) = &mut *s;
        (spec.jump)(t, x, e, beta);
        for c in 0..k {
            xe[c] = x[c] + beta[c];
        }
        let v = u.value(i, t, xe);
        // differences at the rounding level of the values are noise
        if (v - u0).abs() <= 8.0 * f64::EPSILON * v.abs().max(u0.abs()) {
            0.0
        } else {
            v - u0
        }
    }
}

pub fn eval_b(u: &dyn Field, i: usize, spec: &ModelSpec, t: f64, x: &[f64]) -> Result<f64> {
    eval_b_with(u, i, spec, &spec.measure, t, x)
}

pub fn eval_b_with(u: &dyn Field, i: usize, spec: &ModelSpec, measure: &dyn JumpMeasure, t: f64, x: &[f64]) -> Result<f64> {
    if measure.is_null() {
        return Ok(0.0);
    }
    let du = increment(u, i, spec, t, x, u.value(i, t, x));
    let gamma = &spec.weight[i];
    measure.integrate_decaying(&|e| gamma(t, x, e) * du(e), Decay::Quadratic)
}

pub fn eval_b_norm(u: &dyn Field, i: usize, spec: &ModelSpec, t: f64, x: &[f64]) -> Result<f64> {
    eval_b_norm_with(u, i, spec, &spec.measure, t, x)
}

pub fn eval_b_norm_with(u: &dyn Field, i: usize, spec: &ModelSpec, measure: &dyn JumpMeasure, t: f64, x: &[f64]) -> Result<f64> {
    if measure.is_null() {
        return Ok(0.0);
    }
    let du = increment(u, i, spec, t, x, u.value(i, t, x));
    Ok(measure.integrate_decaying(&|e| du(e).powi(2), Decay::Quadratic)?.max(0.0).sqrt())
}

/// The coupling scalar fed to h^(i), selected by the model's coupling mode.
pub fn coupling(u: &dyn Field, i: usize, spec: &ModelSpec, measure: &dyn JumpMeasure, t: f64, x: &[f64]) -> Result<f64> {
    match spec.coupling {
        CouplingMode::GammaIntegral => eval_b_with(u, i, spec, measure, t, x),
        CouplingMode::NormCoupling => eval_b_norm_with(u, i, spec, measure, t, x),
    }
}

/// Central-difference gradient and Hessian of u^i at (t, x) with step h.
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
    pub step: f64,
}

/// Derivatives at the field's own resolution. With `check`, the gradient is
/// recomputed at 2h and a disagreement beyond [`STENCIL_TOLERANCE`] is an error.
pub fn derivatives(u: &dyn Field, i: usize, t: f64, x: &[f64], check: bool) -> Result<Derivatives> {
    let k = x.len();
    let h = u.resolution(t);
    let u0 = u.value(i, t, x);
    let mut p = x.to_vec();
    let mut at = |shifts: &[(usize, f64)]| {
        p.copy_from_slice(x);
        for &(c, s) in shifts {
            p[c] += s;
        }
        u.value(i, t, &p)
    };
    let mut gradient = vec![0.0; k];
    let mut hessian = vec![0.0; k * k];
    for c in 0..k {
        let up = at(&[(c, h)]);
        let dn = at(&[(c, -h)]);
        gradient[c] = (up - dn) / (2.0 * h);
        hessian[c * k + c] = (up - 2.0 * u0 + dn) / (h * h);
        if check {
            let d2 = (at(&[(c, 2.0 * h)]) - at(&[(c, -2.0 * h)])) / (4.0 * h);
            let scale = 1f64.max(gradient[c].abs()).max(d2.abs());
            if (gradient[c] - d2).abs() > STENCIL_TOLERANCE * scale || !d2.is_finite() {
                return Err(Error::IllConditionedDerivative { x: x.to_vec(), d_h: gradient[c], d_2h: d2 });
            }
        }
        for d in 0..c {
            let v = (at(&[(c, h), (d, h)]) - at(&[(c, h), (d, -h)]) - at(&[(c, -h), (d, h)]) + at(&[(c, -h), (d, -h)]))
                / (4.0 * h * h);
            hessian[c * k + d] = v;
            hessian[d * k + c] = v;
        }
    }
    Ok(Derivatives { value: u0, gradient, hessian, step: h })
}

pub fn eval_k(u: &dyn Field, spec: &ModelSpec, t: f64, x: &[f64], i: usize) -> Result<f64> {
    eval_k_with(u, spec, &spec.measure, t, x, i, true)
}

/// Below the radius where |β| drops under the field resolution the increment
/// is replaced by its second-order Taylor form ½βᵀĤβ.
pub fn eval_k_with(
    u: &dyn Field,
    spec: &ModelSpec,
    measure: &dyn JumpMeasure,
    t: f64,
    x: &[f64],
    i: usize,
    check: bool,
) -> Result<f64> {
    if measure.is_null() {
        return Ok(0.0);
    }
    let k = x.len();
    let der = derivatives(u, i, t, x, check)?;
    let eps = taylor_radius(spec, t, x, der.step, spec.measure.support_radius());
    let scratch = RefCell::new((vec![0.0; k], vec![0.0; k]));
    let integrand = |e: &[f64]| {
        let mut s = scratch.borrow_mut();
        let (beta, xe) = &mut *s;
        (spec.jump)(t, x, e, beta);
        let r2: f64 = e.iter().map(|v| v * v).sum();
        if r2 < eps * eps {
            let mut q = 0.0;
            for a in 0..k {
                for b in 0..k {
                    q += beta[a] * der.hessian[a * k + b] * beta[b];
                }
            }
            0.5 * q
        } else {
            let mut lin = 0.0;
            for c in 0..k {
                xe[c] = x[c] + beta[c];
                lin += beta[c] * der.gradient[c];
            }
            u.value(i, t, xe) - der.value - lin
        }
    };
    measure.integrate_decaying(&integrand, Decay::Quadratic)
}

/// Largest dyadic radius R·2^-n with max |β(t,x,e)| ≤ h on the sphere of that radius.
pub(crate) fn taylor_radius(spec: &ModelSpec, t: f64, x: &[f64], h: f64, outer: f64) -> f64 {
    let l = spec.dims.mark;
    let mut beta = vec![0.0; spec.dims.state];
    let mut e = vec![0.0; l];
    let mut r = outer;
    for _ in 0..80 {
        let mut worst: f64 = 0.0;
        for c in 0..l {
            for s in [-1.0, 1.0] {
                e.fill(0.0);
                e[c] = s * r;
                (spec.jump)(t, x, &e, &mut beta);
                worst = worst.max(beta.iter().map(|b| b * b).sum::<f64>().sqrt());
            }
        }
        if l > 1 {
            e.fill(r / (l as f64).sqrt());
            (spec.jump)(t, x, &e, &mut beta);
            worst = worst.max(beta.iter().map(|b| b * b).sum::<f64>().sqrt());
        }
        if worst <= h {
            return r;
        }
        r *= 0.5;
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::zoo::LinearAdditive;
    use crate::LevyMeasure;

    fn linear() -> ModelSpec {
        LinearAdditive::default().build(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()).unwrap()
    }

    #[test]
    fn constants_and_affine_fields() {
        let spec = linear();
        let c = FnField::new(1, 1, |_, _, _| 2.5);
        assert_eq!(eval_b(&c, 0, &spec, 0.0, &[0.3]).unwrap(), 0.0);
        let a = FnField::new(1, 1, |_, _, x: &[f64]| 3.0 * x[0] - 1.0);
        assert!(eval_k(&a, &spec, 0.0, &[0.3], 0).unwrap().abs() < 1e-10);
    }

    #[test]
    fn steep_gradient_change_is_rejected() {
        let spec = linear();
        let kink = FnField::new(1, 1, |_, _, x: &[f64]| (x[0] * 1e3).sin()).with_step(1e-3);
        assert!(matches!(eval_k(&kink, &spec, 0.0, &[0.1], 0), Err(Error::IllConditionedDerivative { .. })));
    }
}
