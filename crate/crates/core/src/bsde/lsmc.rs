//! Backward least-squares recursion shared by every solver entry point.

use rayon::prelude::*;

use super::regression::{monomials, Basis, Design, Gram, Projection};
use super::{BsdeSolution, Estimate, JumpRegression, QEstimator, QMeasure, SolverSettings, StepDiagnostics};
use crate::error::{Error, Result};
use crate::field::{Field, Slice, ValueField};
use crate::levy::{JumpMeasure, TruncatedMeasure};
use crate::model::{CouplingMode, ModelSpec};
use crate::nonlocal;
use crate::sde::PathBundle;
use crate::stats::{mean_and_se, quantile};

/// Where the coupling scalar q comes from at each step.
#[derive(Clone, Copy)]
pub(crate) enum Source<'a> {
    /// From the field being built at the same step (implicit).
    Representation,
    /// From a regression of the jump part of y_{j+1}.
    Martingale,
    /// From a fixed external field.
    Exogenous(&'a dyn Field),
    /// (z, q) held fixed, indexed by step − first step of the window.
    Frozen(&'a [Frozen]),
}

/// Frozen or freshly estimated (z, q) at one step, on paths and lattice nodes.
#[derive(Debug, Clone, Default)]
pub(crate) struct Frozen {
    pub z_path: Vec<f64>,
    pub q_path: Vec<f64>,
    pub z_node: Vec<f64>,
    pub q_node: Vec<f64>,
}

pub(crate) struct StepOutput {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub q: Vec<f64>,
    pub slice: Slice,
    pub diag: StepDiagnostics,
    pub jump: Option<JumpRegression>,
    pub fresh: Option<Frozen>,
}

pub(crate) struct Engine<'a> {
    pub spec: &'a ModelSpec,
    pub bundle: &'a PathBundle,
    pub settings: &'a SolverSettings,
    truncated: TruncatedMeasure,
    one_jump: Vec<Vec<(usize, usize)>>,
}

const ESCAPE: f64 = 1e150;

impl<'a> Engine<'a> {
    pub fn new(spec: &'a ModelSpec, bundle: &'a PathBundle, settings: &'a SolverSettings) -> Result<Self> {
        if bundle.state_dim != spec.dims.state || bundle.brownian_dim != spec.dims.brownian {
            return Err(Error::GridMismatch("path bundle dimensions differ from the model".into()));
        }
        if (bundle.grid.horizon - spec.horizon).abs() > 1e-12 {
            return Err(Error::GridMismatch("path bundle horizon differs from the model".into()));
        }
        if bundle.state_dim > 8 {
            return Err(Error::InvalidInput("regression supports at most 8 state coordinates".into()));
        }
        if let Basis::Polynomial { degree } = settings.basis {
            if degree > 15 {
                return Err(Error::InvalidInput(format!("polynomial degree {degree} exceeds 15")));
            }
        }
        if settings.estimator == QEstimator::Martingale && spec.coupling != CouplingMode::GammaIntegral {
            return Err(Error::EstimatorUnavailable("the martingale estimator only serves the γ-weighted coupling".into()));
        }
        let truncated = spec.measure.truncate(bundle.truncation_k.max(1))?;
        let mut one_jump = vec![Vec::new(); bundle.grid.n_steps];
        if settings.estimator == QEstimator::Martingale {
            for p in 0..bundle.n_paths {
                let lo = bundle.jump_offsets[p];
                let hi = bundle.jump_offsets[p + 1];
                let mut idx = lo;
                while idx < hi {
                    let s = bundle.jump_steps[idx] as usize;
                    let mut end = idx;
                    while end < hi && bundle.jump_steps[end] as usize == s {
                        end += 1;
                    }
                    if end - idx == 1 {
                        one_jump[s].push((p, idx));
                    }
                    idx = end;
                }
            }
        }
        Ok(Self { spec, bundle, settings, truncated, one_jump })
    }

    fn measure(&self) -> &dyn JumpMeasure {
        match self.settings.q_measure {
            QMeasure::Full => &self.spec.measure,
            QMeasure::Truncated => &self.truncated,
        }
    }

    fn lattice_counts(&self) -> Vec<usize> {
        let k = self.bundle.state_dim;
        let n = self.settings.lattice_nodes.unwrap_or(match k {
            1 => 201,
            2 => 41,
            3 => 17,
            _ => 9,
        });
        vec![n.max(2); k]
    }

    /// Lattice over the central 99% of the states at node j.
    fn lattice(&self, j: usize) -> Result<Slice> {
        let k = self.bundle.state_dim;
        let xs = self.bundle.states_at(j);
        let n = self.bundle.n_paths;
        let mut lo = vec![0.0; k];
        let mut hi = vec![0.0; k];
        for c in 0..k {
            let col: Vec<f64> = (0..n).map(|p| xs[p * k + c]).collect();
            let (a, b) = (quantile(&col, 0.005), quantile(&col, 0.995));
            if b - a > 1e-9 * (1.0 + a.abs()) {
                lo[c] = a;
                hi[c] = b;
            } else {
                lo[c] = a - 0.5;
                hi[c] = a + 0.5;
            }
        }
        Slice::new(lo, hi, self.lattice_counts(), self.spec.dims.system)
    }

    /// y at the final node is g(X_T) on every path; the slice tabulates g.
    pub fn terminal(&self) -> Result<(Vec<f64>, Slice)> {
        let j = self.bundle.grid.n_steps;
        let (k, m) = (self.bundle.state_dim, self.spec.dims.system);
        let xs = self.bundle.states_at(j);
        let mut y = vec![0.0; self.bundle.n_paths * m];
        y.par_chunks_mut(m).enumerate().for_each(|(p, out)| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (self.spec.terminal[i])(&xs[p * k..(p + 1) * k]);
            }
        });
        let mut slice = self.lattice(j)?;
        slice.fill(|x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (self.spec.terminal[i])(x);
            }
        });
        Ok((y, slice))
    }

    /// Steps `first..last` backward from (y, slice) at node `last`. Outputs are in step order.
    pub fn run(
        &self,
        first: usize,
        last: usize,
        mut y_next: Vec<f64>,
        mut slice_next: Slice,
        source: Source<'_>,
        want_fresh: bool,
    ) -> Result<Vec<StepOutput>> {
        let mut out = Vec::with_capacity(last - first);
        for j in (first..last).rev() {
            let frozen = match source {
                Source::Frozen(f) => Some(&f[j - first]),
                _ => None,
            };
            let step = self.step(j, &y_next, &slice_next, source, frozen, want_fresh)?;
            y_next = step.y.clone();
            slice_next = step.slice.clone();
            out.push(step);
        }
        out.reverse();
        Ok(out)
    }

    fn generator_pass(&self, t: f64, x: &[f64], c: &[f64], y: &[f64], z: &[f64], q: &[f64], out: &mut [f64]) {
        let (m, d) = (self.spec.dims.system, self.bundle.brownian_dim);
        let dt = self.bundle.grid.dt();
        for i in 0..m {
            out[i] = c[i] + dt * (self.spec.generator[i])(t, x, y, &z[i * d..(i + 1) * d], q[i]);
        }
    }

    fn coupling_at(&self, field: &dyn Field, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let measure = self.measure();
        for (i, o) in out.iter_mut().enumerate() {
            *o = nonlocal::coupling(field, i, self.spec, measure, t, x)?;
        }
        Ok(())
    }

    fn martingale_q(&self, jr: Option<&JumpRegression>, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let Some(jr) = jr else {
            out.fill(0.0);
            return Ok(());
        };
        let k = self.bundle.state_dim;
        let mut beta = vec![0.0; k];
        let scratch = std::cell::RefCell::new(&mut beta);
        for (i, o) in out.iter_mut().enumerate() {
            let gamma = &self.spec.weight[i];
            *o = self.truncated.integrate(&|e| {
                let mut b = scratch.borrow_mut();
                (self.spec.jump)(t, x, e, &mut b[..]);
                gamma(t, x, e) * jr.eval(i, x, &b[..])
            })?;
        }
        Ok(())
    }

    fn jump_regression(&self, j: usize, y_next: &[f64], c_path: &[f64], z_path: &[f64]) -> Result<Option<JumpRegression>> {
        let rows = &self.one_jump[j];
        let (k, m, d) = (self.bundle.state_dim, self.spec.dims.system, self.bundle.brownian_dim);
        if rows.is_empty() {
            if self.truncated.is_null() {
                return Ok(None);
            }
            return Err(Error::EstimatorUnavailable(format!("no single-jump paths at step {j}")));
        }
        let xs = self.bundle.states_at(j);
        let marks = monomials(k, 1, 3);
        let sub: Vec<f64> = rows.iter().flat_map(|(p, _)| xs[p * k..(p + 1) * k].iter().copied()).collect();
        let mut degree = match self.settings.basis {
            Basis::Polynomial { degree } => degree.min(2),
            Basis::Local { .. } => 2,
        };
        let design = loop {
            let dsg = Design::fit(&Basis::Polynomial { degree }, &sub, k)?;
            if dsg.len() * marks.len() * 20 <= rows.len() || degree == 0 {
                break dsg;
            }
            degree -= 1;
        };
        let w = design.len() * marks.len();
        if w * 20 > rows.len() {
            return Err(Error::EstimatorUnavailable(format!(
                "step {j}: {} single-jump paths cannot support {w} jump regressors",
                rows.len()
            )));
        }
        let jr0 = JumpRegression { design, marks, coeffs: Vec::new(), n_jumps: rows.len() };
        let feat = |r: usize, out: &mut [f64]| {
            let (p, idx) = rows[r];
            let pre = &self.bundle.jump_pre_states[idx * k..(idx + 1) * k];
            let post = &self.bundle.jump_post_states[idx * k..(idx + 1) * k];
            let mut beta = [0.0f64; 8];
            for c in 0..k {
                beta[c] = post[c] - pre[c];
            }
            jr0.features(&xs[p * k..(p + 1) * k], &beta[..k], out);
        };
        let gram = Gram::build(rows.len(), w, feat, self.settings.max_condition, j)?;
        let proj = gram.solve(feat, m, |r, out| {
            let p = rows[r].0;
            let db = self.bundle.increment(j, p);
            for i in 0..m {
                let mart: f64 = (0..d).map(|c| z_path[(p * m + i) * d + c] * db[c]).sum();
                out[i] = y_next[p * m + i] - c_path[p * m + i] - mart;
            }
        });
        Ok(Some(JumpRegression { coeffs: proj.coeffs, ..jr0 }))
    }

    fn step(
        &self,
        j: usize,
        y_next: &[f64],
        slice_next: &Slice,
        source: Source<'_>,
        frozen: Option<&Frozen>,
        want_fresh: bool,
    ) -> Result<StepOutput> {
        let b = self.bundle;
        let (n, k, m, d) = (b.n_paths, b.state_dim, self.spec.dims.system, b.brownian_dim);
        let grid = b.grid;
        let t = grid.node(j);
        let dt = grid.dt();
        let xs = b.states_at(j);
        let tol = self.settings.fixed_point_tolerance;
        let max_passes = self.settings.max_fixed_point_passes;

        let design = Design::fit(&self.settings.basis, xs, k)?;
        let w = design.len();
        if w * 20 > n {
            return Err(Error::InvalidInput(format!("{w} basis functions need at least {} paths, have {n}", w * 20)));
        }
        let feat = |p: usize, out: &mut [f64]| design.eval(&xs[p * k..(p + 1) * k], out);
        let gram = Gram::build(n, w, feat, self.settings.max_condition, j)?;
        let cont = gram.solve(feat, m, |p, out| out.copy_from_slice(&y_next[p * m..(p + 1) * m]));
        let c_path = eval_paths(&design, &cont, xs, k, m);
        let zproj = gram.solve(feat, m * d, |p, out| {
            let db = b.increment(j, p);
            for i in 0..m {
                for c in 0..d {
                    out[i * d + c] = (y_next[p * m + i] - c_path[p * m + i]) * db[c] / dt;
                }
            }
        });
        let zhat_path = eval_paths(&design, &zproj, xs, k, m * d);
        let z_path = match frozen {
            Some(f) => or_zeros(&f.z_path, n * m * d),
            None => zhat_path.clone(),
        };
        let jump = match source {
            Source::Martingale => self.jump_regression(j, y_next, &c_path, &zhat_path)?,
            _ => None,
        };

        let degenerate = design.is_degenerate();
        let mut slice = if degenerate { slice_next.clone() } else { self.lattice(j)? };
        let points: Vec<Vec<f64>> = if degenerate { vec![xs[..k].to_vec()] } else { slice.nodes() };
        let np = points.len();
        let mut phi = vec![0.0; w];
        let mut c_node = vec![0.0; np * m];
        let mut zhat_node = vec![0.0; np * m * d];
        let mut se: f64 = 0.0;
        for (a, x) in points.iter().enumerate() {
            design.eval(x, &mut phi);
            let lev = gram.leverage(&phi);
            for i in 0..m {
                c_node[a * m + i] = cont.eval(i, &phi);
                se = se.max((cont.residual_variance[i] * lev).sqrt());
            }
            for r in 0..m * d {
                zhat_node[a * m * d + r] = zproj.eval(r, &phi);
            }
        }
        let z_node = match frozen {
            Some(f) => or_zeros(&f.z_node, np * m * d),
            None => zhat_node.clone(),
        };
        // shape of the degenerate slice relative to its single point
        let anchor: Vec<f64> = if degenerate { (0..m).map(|i| slice_next.interpolate(i, &points[0])).collect() } else { vec![] };

        let q_points = |field: &dyn Field| -> Result<Vec<f64>> {
            let rows: Vec<Result<Vec<f64>>> = points
                .par_iter()
                .map(|x| {
                    let mut q = vec![0.0; m];
                    self.coupling_at(field, t, x, &mut q)?;
                    Ok(q)
                })
                .collect();
            Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.concat())
        };
        let mut q_node = match (source, frozen) {
            (_, Some(f)) => or_zeros(&f.q_node, np * m),
            (Source::Exogenous(u), _) => q_points(u)?,
            (Source::Martingale, _) => {
                let rows: Vec<Result<Vec<f64>>> = points
                    .par_iter()
                    .map(|x| {
                        let mut q = vec![0.0; m];
                        self.martingale_q(jump.as_ref(), t, x, &mut q)?;
                        Ok(q)
                    })
                    .collect();
                rows.into_iter().collect::<Result<Vec<_>>>()?.concat()
            }
            (Source::Representation, _) if degenerate => q_points(slice_next)?,
            _ => vec![0.0; np * m],
        };

        let implicit_q = matches!(source, Source::Representation) && frozen.is_none() && !degenerate;
        let mut v = c_node.clone();
        let mut next = vec![0.0; np * m];
        let mut passes = 0;
        loop {
            passes += 1;
            if implicit_q {
                fill_slice(&mut slice, &v, &anchor, slice_next, degenerate);
                q_node = q_points(&slice)?;
            }
            for a in 0..np {
                self.generator_pass(
                    t,
                    &points[a],
                    &c_node[a * m..(a + 1) * m],
                    &v[a * m..(a + 1) * m],
                    &z_node[a * m * d..(a + 1) * m * d],
                    &q_node[a * m..(a + 1) * m],
                    &mut next[a * m..(a + 1) * m],
                );
            }
            let change = v.iter().zip(&next).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut next);
            if !v.iter().all(|x| x.is_finite() && x.abs() < ESCAPE) {
                return Err(Error::NonFiniteState { path: 0, step: j });
            }
            if change <= tol {
                break;
            }
            if passes >= max_passes {
                return Err(Error::NonConvergence { step: j, passes });
            }
        }
        fill_slice(&mut slice, &v, &anchor, slice_next, degenerate);

        let q_slice = if degenerate {
            None
        } else {
            let mut s = slice.clone();
            s.values.copy_from_slice(&q_node);
            Some(s)
        };
        let q_path = match frozen {
            Some(f) => or_zeros(&f.q_path, n * m),
            None => interpolate_paths(q_slice.as_ref(), &q_node, xs, k, m),
        };

        let mut y = vec![0.0; n * m];
        let bad: Option<usize> = y
            .par_chunks_mut(m)
            .enumerate()
            .map_init(
                || vec![0.0; m],
                |tmp, (p, out)| {
                    let x = &xs[p * k..(p + 1) * k];
                    let c = &c_path[p * m..(p + 1) * m];
                    let z = &z_path[p * m * d..(p + 1) * m * d];
                    let q = &q_path[p * m..(p + 1) * m];
                    out.copy_from_slice(c);
                    for _ in 0..max_passes {
                        self.generator_pass(t, x, c, out, z, q, tmp);
                        let change = out.iter().zip(tmp.iter()).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
                        out.copy_from_slice(tmp);
                        if change <= tol {
                            return None;
                        }
                    }
                    Some(p)
                },
            )
            .find_first(|r| r.is_some())
            .flatten();
        if bad.is_some() {
            return Err(Error::NonConvergence { step: j, passes: max_passes });
        }
        if let Some(p) = y.iter().position(|v| !v.is_finite() || v.abs() > ESCAPE) {
            return Err(Error::NonFiniteState { path: p / m, step: j });
        }

        let fresh = if want_fresh {
            let q_fresh_node = match source {
                Source::Exogenous(u) => q_points(u)?,
                _ if degenerate => q_points(slice_next)?,
                _ => q_points(&slice)?,
            };
            let q_fresh_slice = q_slice.map(|mut s| {
                s.values.copy_from_slice(&q_fresh_node);
                s
            });
            Some(Frozen {
                z_path: zhat_path,
                q_path: interpolate_paths(q_fresh_slice.as_ref(), &q_fresh_node, xs, k, m),
                z_node: zhat_node,
                q_node: q_fresh_node,
            })
        } else {
            None
        };

        let diag = StepDiagnostics {
            step: j,
            condition: gram.condition,
            residual_sd: cont.residual_variance.iter().map(|v| v.sqrt()).collect(),
            fixed_point_passes: passes,
            field_standard_error: se,
            degenerate,
        };
        Ok(StepOutput { y, z: z_path, q: q_path, slice, diag, jump, fresh })
    }

    /// Assemble a solution from the terminal data and per-step outputs (step order).
    pub fn assemble(&self, y_terminal: Vec<f64>, slice_terminal: Slice, steps: Vec<StepOutput>) -> Result<BsdeSolution> {
        let b = self.bundle;
        let (n, k, m, d) = (b.n_paths, b.state_dim, self.spec.dims.system, b.brownian_dim);
        let grid = b.grid;
        let mut y = Vec::with_capacity(grid.n_steps + 1);
        let mut z = Vec::with_capacity(grid.n_steps);
        let mut q = Vec::with_capacity(grid.n_steps);
        let mut slices = Vec::with_capacity(grid.n_steps + 1);
        let mut diagnostics = Vec::with_capacity(grid.n_steps);
        let mut jumps = Vec::with_capacity(grid.n_steps);
        for s in steps {
            y.push(s.y);
            z.push(s.z);
            q.push(s.q);
            slices.push(s.slice);
            diagnostics.push(s.diag);
            jumps.push(s.jump);
        }
        y.push(y_terminal);
        slices.push(slice_terminal);
        let fields = ValueField::new(grid.nodes(), slices)?;
        let dt = grid.dt();
        let xt = b.states_at(grid.n_steps);
        let estimates = (0..m)
            .map(|i| {
                let v: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|p| {
                        let mut acc = (self.spec.terminal[i])(&xt[p * k..(p + 1) * k]);
                        for j in 0..grid.n_steps {
                            let x = b.state(j, p);
                            acc += dt
                                * (self.spec.generator[i])(
                                    grid.node(j),
                                    x,
                                    &y[j][p * m..(p + 1) * m],
                                    &z[j][(p * m + i) * d..(p * m + i + 1) * d],
                                    q[j][p * m + i],
                                );
                        }
                        acc
                    })
                    .collect();
                let (_, se) = mean_and_se(&v);
                let y0 = crate::stats::mean(&(0..n).map(|p| y[0][p * m + i]).collect::<Vec<_>>());
                Estimate { value: y0, std_error: se }
            })
            .collect();
        // errors of later fits are carried backward, so they add up in quadrature
        let regression_tolerance = diagnostics.iter().map(|d| d.field_standard_error.powi(2)).sum::<f64>().sqrt();
        Ok(BsdeSolution {
            grid,
            components: m,
            brownian_dim: d,
            n_paths: n,
            estimator: self.settings.estimator,
            coupling: self.spec.coupling,
            y,
            z,
            q,
            fields,
            diagnostics,
            windows: Vec::new(),
            jump_regressions: jumps,
            regression_tolerance,
            estimates,
        })
    }
}

fn or_zeros(v: &[f64], len: usize) -> Vec<f64> {
    if v.is_empty() {
        vec![0.0; len]
    } else {
        v.to_vec()
    }
}

fn fill_slice(slice: &mut Slice, v: &[f64], anchor: &[f64], shape: &Slice, degenerate: bool) {
    if degenerate {
        let m = slice.components;
        for (idx, chunk) in slice.values.chunks_mut(m).enumerate() {
            for i in 0..m {
                chunk[i] = shape.at(idx, i) + (v[i] - anchor[i]);
            }
        }
    } else {
        slice.values.copy_from_slice(v);
    }
}

fn eval_paths(design: &Design, proj: &Projection, xs: &[f64], k: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; xs.len() / k * width];
    out.par_chunks_mut(width).enumerate().for_each_init(
        || vec![0.0; design.len()],
        |phi, (p, o)| {
            design.eval(&xs[p * k..(p + 1) * k], phi);
            for (r, v) in o.iter_mut().enumerate() {
                *v = proj.eval(r, phi);
            }
        },
    );
    out
}

fn interpolate_paths(lattice: Option<&Slice>, point_values: &[f64], xs: &[f64], k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; xs.len() / k * m];
    match lattice {
        None => out.par_chunks_mut(m).for_each(|o| o.copy_from_slice(&point_values[..m])),
        Some(s) => out.par_chunks_mut(m).enumerate().for_each_init(
            || vec![0.0; k],
            |tmp, (p, o)| {
                for (i, v) in o.iter_mut().enumerate() {
                    *v = s.interpolate_clamped(i, &xs[p * k..(p + 1) * k], tmp);
                }
            },
        ),
    }
    out
}
