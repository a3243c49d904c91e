//! One-dimensional finite differences for the integro-differential system,
//! used as an independent reference for the Monte Carlo solver.
//!
//! Backward in time, each step solves the local part implicitly (tridiagonal)
//! and takes K, the coupling scalar and h explicitly from the previous slice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Slice, ValueField};
use crate::levy::Decay;
use crate::model::{check_assumptions, DomainBox, ModelSpec};
use crate::nonlocal::{coupling, derivatives, eval_k_with, taylor_radius};

#[derive(Debug, Clone)]
pub struct FdProblem {
    pub spec: ModelSpec,
    /// The space box is [−half_width, half_width].
    pub half_width: f64,
    pub nx: usize,
    pub nt: usize,
}

impl FdProblem {
    pub fn new(spec: ModelSpec, half_width: f64, nx: usize, nt: usize) -> Self {
        Self { spec, half_width, nx, nt }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.spec.horizon / self.nt as f64
    }

    fn validate(&self) -> Result<()> {
        let d = self.spec.dims;
        if d.state != 1 || d.brownian != 1 || d.mark != 1 || d.system > 2 {
            return Err(Error::InvalidInput(format!("finite differences need k = d = ℓ = 1 and m ≤ 2, got {d:?}")));
        }
        if self.nx < 7 || self.nt == 0 || !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid needs nx ≥ 7, nt ≥ 1 and a positive box (nx = {}, nt = {}, L = {})",
                self.nx, self.nt, self.half_width
            )));
        }
        Ok(())
    }

    /// Δt·(λ(|e| ≥ ε) + Ĉ_h), with ε the smallest radius K integrates exactly.
    pub fn cfl_number(&self) -> Result<f64> {
        self.validate()?;
        let spec = &self.spec;
        let lambda = if spec.measure.is_zero() {
            0.0
        } else {
            let dx = self.dx();
            let eps = (0..self.nx)
                .map(|j| {
                    let x = [-self.half_width + j as f64 * dx];
                    taylor_radius(spec, spec.horizon, &x, dx, spec.measure.support_radius())
                })
                .fold(f64::INFINITY, f64::min);
            spec.measure.integrate(&|e| if e[0].abs() >= eps { 1.0 } else { 0.0 }, Decay::Quadratic)?
        };
        let report = check_assumptions(spec, &DomainBox::centered(spec, self.half_width), 2000, 0)?;
        Ok(self.dt() * (lambda + report.generator_lipschitz()))
    }
}

/// Explicit part of one step at every node: K u + h(u, σ u_x, q).
fn explicit_terms(spec: &ModelSpec, u: &ValueField, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let m = spec.dims.system;
    let n = xs.len();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = [xs[j]];
            let y: Vec<f64> = (0..m).map(|i| u.value(i, t, &x)).collect();
            let sigma = spec.diffusion_at(t, &x)[0];
            let mut out = vec![0.0; m];
            for (i, o) in out.iter_mut().enumerate() {
                let k = eval_k_with(u, spec, &spec.measure, t, &x, i, false)?;
                let q = coupling(u, i, spec, &spec.measure, t, &x)?;
                let ux = derivatives(u, i, t, &x, false)?.gradient[0];
                *o = k + (spec.generator[i])(t, &x, &y, &[sigma * ux], q);
            }
            Ok(out)
        })
        .collect();
    let mut flat = Vec::with_capacity(n * m);
    for r in rows {
        flat.extend(r?);
    }
    Ok(flat)
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    for i in 0..n {
        if i > 0 {
            pivot = diag[i] - lower[i] * c[i - 1];
        }
        let scale = diag[i].abs() + lower[i].abs() + upper[i].abs();
        if !(pivot.abs() > 1e-14 * scale) {
            return Err(Error::TridiagonalSingular { row: i });
        }
        c[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - if i > 0 { lower[i] * rhs[i - 1] } else { 0.0 }) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// March backward from u(T, ·) = g. Boundary nodes keep the curvature of the
/// previous step one cell inside the box.
pub fn solve_fd(problem: &FdProblem) -> Result<ValueField> {
    let cfl = problem.cfl_number()?;
    if cfl >= 1.0 {
        return Err(Error::CflViolation { value: cfl });
    }
    let spec = &problem.spec;
    let (nx, nt, m) = (problem.nx, problem.nt, spec.dims.system);
    let (dx, dt) = (problem.dx(), problem.dt());
    let lo = -problem.half_width;
    let xs: Vec<f64> = (0..nx).map(|j| lo + j as f64 * dx).collect();
    let times: Vec<f64> = (0..=nt).map(|n| spec.horizon * n as f64 / nt as f64).collect();

    let mut slice = Slice::new(vec![lo], vec![problem.half_width], vec![nx], m)?;
    slice.fill(|x, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (spec.terminal[i])(x);
        }
    });
    let mut slices = vec![slice.clone()];
    let (mut lower, mut diag, mut upper) = (vec![0.0; nx - 2], vec![0.0; nx - 2], vec![0.0; nx - 2]);
    let mut rhs = vec![0.0; nx - 2];
    for n in (0..nt).rev() {
        let (t_next, t) = (times[n + 1], times[n]);
        let prev = ValueField::new(vec![t_next], vec![slice.clone()])?;
        let explicit = explicit_terms(spec, &prev, t_next, &xs)?;
        let mut next = slice.clone();
        for i in 0..m {
            let old = |j: usize| slice.values[j * m + i];
            for r in 0..nx - 2 {
                let j = r + 1;
                let x = [xs[j]];
                let b = spec.drift_at(t, &x)[0];
                let s2 = spec.diffusion_at(t, &x)[0].powi(2);
                lower[r] = -dt * (0.5 * s2 / (dx * dx) - b / (2.0 * dx));
                upper[r] = -dt * (0.5 * s2 / (dx * dx) + b / (2.0 * dx));
                diag[r] = 1.0 + dt * s2 / (dx * dx);
                rhs[r] = old(j) + dt * explicit[j * m + i];
            }
            // u_0 = 2u_1 − u_2 + κ_left, u_{N} = 2u_{N−1} − u_{N−2} + κ_right
            let kl = old(1) - 2.0 * old(2) + old(3);
            let kr = old(nx - 2) - 2.0 * old(nx - 3) + old(nx - 4);
            let e = nx - 3;
            rhs[0] -= lower[0] * kl;
            diag[0] += 2.0 * lower[0];
            upper[0] -= lower[0];
            rhs[e] -= upper[e] * kr;
            diag[e] += 2.0 * upper[e];
            lower[e] -= upper[e];
            solve_tridiagonal(&lower, &diag, &upper, &mut rhs)?;
            for r in 0..nx - 2 {
                next.values[(r + 1) * m + i] = rhs[r];
            }
            next.values[i] = 2.0 * rhs[0] - rhs[1] + kl;
            next.values[(nx - 1) * m + i] = 2.0 * rhs[e] - rhs[e - 1] + kr;
        }
        slice = next;
        slices.push(slice.clone());
    }
    slices.reverse();
    ValueField::new(times, slices)
}

/// Which viscosity definition the coupling term follows. On smooth lattice
/// fields the field is its own test function, so both give the same number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definition {
    /// Coupling evaluated on the candidate solution itself.
    #[default]
    Frozen,
    /// Coupling evaluated on a smooth test function touching the candidate.
    TestFunction,
}

/// −∂_t u − b u_x − ½σ² u_xx − K u − h^(i)(t, x, u, σ u_x, q) at a lattice time t,
/// with a forward difference in time and central differences in space.
pub fn residual(u: &ValueField, spec: &ModelSpec, i: usize, t: f64, x: &[f64], definition: Definition) -> Result<f64> {
    let n = u.slice_at(t).ok_or_else(|| Error::InvalidInput(format!("t = {t} is not a slice time of the field")))?;
    if !u.slices[n].contains(x) {
        return Err(Error::InvalidInput(format!("x = {x:?} lies outside the lattice at t = {t}")));
    }
    let ut = if n + 1 < u.n_times() {
        (u.value(i, u.times[n + 1], x) - u.value(i, t, x)) / (u.times[n + 1] - t)
    } else if n > 0 {
        (u.value(i, t, x) - u.value(i, u.times[n - 1], x)) / (t - u.times[n - 1])
    } else {
        0.0
    };
    let der = derivatives(u, i, t, x, true)?;
    let k = x.len();
    let b = spec.drift_at(t, x);
    let sigma = spec.diffusion_at(t, x);
    let d = spec.dims.brownian;
    let mut local = 0.0;
    for a in 0..k {
        local += b[a] * der.gradient[a];
        for c in 0..k {
            let cov: f64 = (0..d).map(|r| sigma[a * d + r] * sigma[c * d + r]).sum();
            local += 0.5 * cov * der.hessian[a * k + c];
        }
    }
    let z: Vec<f64> = (0..d).map(|r| (0..k).map(|a| sigma[a * d + r] * der.gradient[a]).sum()).collect();
    let y: Vec<f64> = (0..spec.dims.system).map(|c| u.value(c, t, x)).collect();
    let q = match definition {
        Definition::Frozen | Definition::TestFunction => coupling(u, i, spec, &spec.measure, t, x)?,
    };
    let kk = eval_k_with(u, spec, &spec.measure, t, x, i, true)?;
    Ok(-ut - local - kk - (spec.generator[i])(t, x, &y, &z, q))
}
