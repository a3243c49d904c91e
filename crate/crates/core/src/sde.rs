//! Euler simulation of the forward jump-diffusion under a truncated measure.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::TruncatedMeasure;
use crate::model::ModelSpec;
use crate::rng::{stream, JumpStream, StreamTag};
use crate::stats::chunked_sum;

/// Uniform grid t0 = s_0 < … < s_n = horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || !(horizon > t0) || !t0.is_finite() || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!("bad time grid [{t0}, {horizon}] with {n_steps} steps")));
        }
        Ok(Self { t0, horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.horizon
        } else {
            self.t0 + j as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.node(j)).collect()
    }
}

/// Simulated forward paths. Node arrays are node-major:
/// `states[(j * n_paths + p) * k + c]`, increments `[(j * n_paths + p) * d + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub state_dim: usize,
    pub brownian_dim: usize,
    pub mark_dim: usize,
    pub start: Vec<f64>,
    pub truncation_k: u32,
    pub seed: u64,
    pub states: Vec<f64>,
    pub left_limits: Vec<f64>,
    pub brownian_increments: Vec<f64>,
    /// Jumps of path p occupy indices `jump_offsets[p]..jump_offsets[p + 1]`.
    pub jump_offsets: Vec<usize>,
    pub jump_times: Vec<f64>,
    pub jump_steps: Vec<u32>,
    pub jump_marks: Vec<f64>,
    pub jump_pre_states: Vec<f64>,
    pub jump_post_states: Vec<f64>,
}

/// One stored jump.
#[derive(Debug, Clone, Copy)]
pub struct JumpEvent<'a> {
    pub time: f64,
    /// Grid step j with time in (s_j, s_{j+1}].
    pub step: usize,
    pub mark: &'a [f64],
    pub pre: &'a [f64],
    pub post: &'a [f64],
}

impl PathBundle {
    pub fn n_nodes(&self) -> usize {
        self.grid.n_steps + 1
    }

    /// All paths at node j, `n_paths * k` values.
    pub fn states_at(&self, j: usize) -> &[f64] {
        let w = self.n_paths * self.state_dim;
        &self.states[j * w..(j + 1) * w]
    }

    pub fn state(&self, j: usize, p: usize) -> &[f64] {
        let k = self.state_dim;
        let o = (j * self.n_paths + p) * k;
        &self.states[o..o + k]
    }

    pub fn left_limit(&self, j: usize, p: usize) -> &[f64] {
        let k = self.state_dim;
        let o = (j * self.n_paths + p) * k;
        &self.left_limits[o..o + k]
    }

    pub fn increment(&self, j: usize, p: usize) -> &[f64] {
        let d = self.brownian_dim;
        let o = (j * self.n_paths + p) * d;
        &self.brownian_increments[o..o + d]
    }

    pub fn jumps(&self, p: usize) -> impl Iterator<Item = JumpEvent<'_>> {
        let (k, l) = (self.state_dim, self.mark_dim);
        (self.jump_offsets[p]..self.jump_offsets[p + 1]).map(move |i| JumpEvent {
            time: self.jump_times[i],
            step: self.jump_steps[i] as usize,
            mark: &self.jump_marks[i * l..(i + 1) * l],
            pre: &self.jump_pre_states[i * k..(i + 1) * k],
            post: &self.jump_post_states[i * k..(i + 1) * k],
        })
    }

    pub fn total_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Largest |post − pre − β(time, pre, mark)| over stored jumps.
    pub fn jump_consistency(&self, spec: &ModelSpec) -> f64 {
        let mut beta = vec![0.0; self.state_dim];
        let mut worst: f64 = 0.0;
        for p in 0..self.n_paths {
            for ev in self.jumps(p) {
                (spec.jump)(ev.time, ev.pre, ev.mark, &mut beta);
                for c in 0..self.state_dim {
                    worst = worst.max((ev.post[c] - ev.pre[c] - beta[c]).abs());
                }
            }
        }
        worst
    }
}

struct PathOut {
    states: Vec<f64>,
    left: Vec<f64>,
    increments: Vec<f64>,
    times: Vec<f64>,
    steps: Vec<u32>,
    marks: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

/// ∫_{|e|≥1/k} β(t, x, e) λ(de), cached per grid node when β ignores x.
enum Compensator {
    Cached(Vec<f64>),
    PerState,
}

fn compensator_at(spec: &ModelSpec, tm: &TruncatedMeasure, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
    let k = spec.dims.state;
    for (c, o) in out.iter_mut().enumerate() {
        *o = tm.integrate(&|e| {
            let mut b = vec![0.0; k];
            (spec.jump)(t, x, e, &mut b);
            b[c]
        })?;
    }
    Ok(())
}

const MAX_STATE: f64 = 1e150;

#[allow(clippy::too_many_arguments)]
fn simulate_path(
    spec: &ModelSpec,
    tm: &TruncatedMeasure,
    comp: &Compensator,
    grid: &TimeGrid,
    x0: &[f64],
    seed: u64,
    path: usize,
) -> Result<PathOut> {
    let (k, d, l) = (spec.dims.state, spec.dims.brownian, spec.dims.mark);
    let n = grid.n_steps;
    let jumps = tm.sample_jumps(grid.t0, grid.horizon, &JumpStream::new(seed, path as u64))?;
    let mut bm = stream(seed, path as u64, StreamTag::Brownian);
    let mut bridge = stream(seed, path as u64, StreamTag::Bridge);
    let mut out = PathOut {
        states: Vec::with_capacity((n + 1) * k),
        left: Vec::with_capacity((n + 1) * k),
        increments: Vec::with_capacity(n * d),
        times: Vec::with_capacity(jumps.len()),
        steps: Vec::with_capacity(jumps.len()),
        marks: Vec::with_capacity(jumps.len() * l),
        pre: Vec::with_capacity(jumps.len() * k),
        post: Vec::with_capacity(jumps.len() * k),
    };
    let mut x = x0.to_vec();
    out.states.extend_from_slice(&x);
    out.left.extend_from_slice(&x);
    let mut b = vec![0.0; k];
    let mut sig = vec![0.0; k * d];
    let mut beta = vec![0.0; k];
    let mut cmp = vec![0.0; k];
    let mut db = vec![0.0; d];
    let mut w_prev = vec![0.0; d];
    let mut w_next = vec![0.0; d];
    let mut ji = 0;

    let mut euler = |x: &mut [f64], j: usize, s: f64, h: f64, dw: &[f64], cmp: &mut [f64]| -> Result<()> {
        if h <= 0.0 {
            return Ok(());
        }
        (spec.drift)(s, x, &mut b);
        (spec.diffusion)(s, x, &mut sig);
        match comp {
            Compensator::Cached(c) => cmp.copy_from_slice(&c[j * k..(j + 1) * k]),
            Compensator::PerState => compensator_at(spec, tm, s, x, cmp)?,
        }
        for r in 0..k {
            let mut dx = (b[r] - cmp[r]) * h;
            for c in 0..d {
                dx += sig[r * d + c] * dw[c];
            }
            x[r] += dx;
        }
        Ok(())
    };

    for j in 0..n {
        let (t_lo, t_hi) = (grid.node(j), grid.node(j + 1));
        let sq = (t_hi - t_lo).sqrt();
        for v in db.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut bm);
            *v = g * sq;
        }
        out.increments.extend_from_slice(&db);
        w_prev.fill(0.0);
        let mut s_prev = t_lo;
        let mut tied = Vec::new();
        while ji < jumps.len() && jumps.times[ji] <= t_hi {
            let tau = jumps.times[ji];
            if tau == t_hi {
                tied.push(ji);
                ji += 1;
                continue;
            }
            // Brownian bridge from (s_prev, w_prev) to (t_hi, db).
            let frac = (tau - s_prev) / (t_hi - s_prev);
            let sd = ((tau - s_prev) * (t_hi - tau) / (t_hi - s_prev)).max(0.0).sqrt();
            for c in 0..d {
                let g: f64 = StandardNormal.sample(&mut bridge);
                w_next[c] = w_prev[c] + frac * (db[c] - w_prev[c]) + sd * g;
            }
            let dw: Vec<f64> = w_next.iter().zip(&w_prev).map(|(a, b)| a - b).collect();
            euler(&mut x, j, s_prev, tau - s_prev, &dw, &mut cmp)?;
            let e = jumps.mark(ji);
            out.pre.extend_from_slice(&x);
            (spec.jump)(tau, &x, e, &mut beta);
            for (xr, br) in x.iter_mut().zip(&beta) {
                *xr += br;
            }
            out.post.extend_from_slice(&x);
            out.times.push(tau);
            out.steps.push(j as u32);
            out.marks.extend_from_slice(e);
            s_prev = tau;
            w_prev.copy_from_slice(&w_next);
            ji += 1;
        }
        let dw: Vec<f64> = db.iter().zip(&w_prev).map(|(a, b)| a - b).collect();
        euler(&mut x, j, s_prev, t_hi - s_prev, &dw, &mut cmp)?;
        out.left.extend_from_slice(&x);
        for idx in tied {
            let e = jumps.mark(idx);
            out.pre.extend_from_slice(&x);
            (spec.jump)(t_hi, &x, e, &mut beta);
            for (xr, br) in x.iter_mut().zip(&beta) {
                *xr += br;
            }
            out.post.extend_from_slice(&x);
            out.times.push(t_hi);
            out.steps.push(j as u32);
            out.marks.extend_from_slice(e);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > MAX_STATE) {
            return Err(Error::NonFiniteState { path, step: j + 1 });
        }
        out.states.extend_from_slice(&x);
    }
    Ok(out)
}

/// Simulate `n_paths` paths of the forward SDE started at (grid.t0, x) with
/// jumps from the truncated measure. Path p only consumes the streams keyed by
/// (seed, p), so the bundle does not depend on scheduling.
pub fn simulate(
    spec: &ModelSpec,
    tm: &TruncatedMeasure,
    x: &[f64],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let (k, d, l) = (spec.dims.state, spec.dims.brownian, spec.dims.mark);
    if x.len() != k {
        return Err(Error::InvalidInput(format!("start point has dimension {} but the state dimension is {k}", x.len())));
    }
    if tm.base().dim() != l {
        return Err(Error::InvalidInput("truncated measure dimension does not match the mark dimension".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths must be positive".into()));
    }
    if (grid.horizon - spec.horizon).abs() > 1e-12 * spec.horizon.abs().max(1.0) {
        return Err(Error::InvalidInput(format!("grid ends at {} but the model horizon is {}", grid.horizon, spec.horizon)));
    }
    let n = grid.n_steps;
    let comp = if spec.jump_state_independent {
        let mut c = vec![0.0; n * k];
        for j in 0..n {
            compensator_at(spec, tm, grid.node(j), x, &mut c[j * k..(j + 1) * k])?;
        }
        Compensator::Cached(c)
    } else {
        Compensator::PerState
    };
    let outs: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|p| simulate_path(spec, tm, &comp, grid, x, seed, p))
        .collect::<Result<Vec<_>>>()?;

    let mut states = vec![0.0; (n + 1) * n_paths * k];
    let mut left_limits = vec![0.0; (n + 1) * n_paths * k];
    let mut brownian_increments = vec![0.0; n * n_paths * d];
    for (p, o) in outs.iter().enumerate() {
        for j in 0..=n {
            let dst = (j * n_paths + p) * k;
            states[dst..dst + k].copy_from_slice(&o.states[j * k..(j + 1) * k]);
            left_limits[dst..dst + k].copy_from_slice(&o.left[j * k..(j + 1) * k]);
        }
        for j in 0..n {
            let dst = (j * n_paths + p) * d;
            brownian_increments[dst..dst + d].copy_from_slice(&o.increments[j * d..(j + 1) * d]);
        }
    }
    let total: usize = outs.iter().map(|o| o.times.len()).sum();
    let mut jump_offsets = Vec::with_capacity(n_paths + 1);
    let mut jump_times = Vec::with_capacity(total);
    let mut jump_steps = Vec::with_capacity(total);
    let mut jump_marks = Vec::with_capacity(total * l);
    let mut jump_pre_states = Vec::with_capacity(total * k);
    let mut jump_post_states = Vec::with_capacity(total * k);
    jump_offsets.push(0);
    for o in outs {
        jump_times.extend(o.times);
        jump_steps.extend(o.steps);
        jump_marks.extend(o.marks);
        jump_pre_states.extend(o.pre);
        jump_post_states.extend(o.post);
        jump_offsets.push(jump_times.len());
    }
    Ok(PathBundle {
        grid: *grid,
        n_paths,
        state_dim: k,
        brownian_dim: d,
        mark_dim: l,
        start: x.to_vec(),
        truncation_k: tm.k(),
        seed,
        states,
        left_limits,
        brownian_increments,
        jump_offsets,
        jump_times,
        jump_steps,
        jump_marks,
        jump_pre_states,
        jump_post_states,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    /// E[sup_{r≤s} |X_r − x|^p] against M_p (s − t)(1 + |x|^p).
    Displacement,
    /// E[sup_{r≤s} |X_r − X′_r − (x − x′)|^p] against M_p (s − t)|x − x′|^p.
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub variant: MomentVariant,
    pub p: u32,
    /// s − t at each node.
    pub elapsed: Vec<f64>,
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// (1 + |x|^p) or |x − x′|^p.
    pub scale: f64,
    /// Fitted M_p.
    pub constant: f64,
    /// Relative L2 residual of the fit over nodes.
    pub residual: f64,
    /// Moments nondecreasing in s.
    pub monotone: bool,
    pub n_paths: usize,
}

fn comparable(a: &PathBundle, b: &PathBundle) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("grids differ: {:?} vs {:?}", a.grid, b.grid)));
    }
    if a.n_paths != b.n_paths || a.seed != b.seed || a.state_dim != b.state_dim {
        return Err(Error::GridMismatch("bundles must share path count, seed and dimensions".into()));
    }
    Ok(())
}

/// Running-sup moments per node and the fitted moment constant.
pub fn moment_check(bundle: &PathBundle, bundle2: Option<&PathBundle>, p: u32) -> Result<MomentReport> {
    if p != 2 && p != 4 {
        return Err(Error::InvalidInput(format!("moment order must be 2 or 4, got {p}")));
    }
    if let Some(b2) = bundle2 {
        comparable(bundle, b2)?;
    }
    let n_nodes = bundle.n_nodes();
    let k = bundle.state_dim;
    let x = &bundle.start;
    let shift: Vec<f64> = match bundle2 {
        Some(b2) => x.iter().zip(&b2.start).map(|(a, b)| a - b).collect(),
        None => vec![0.0; k],
    };
    let deviation = |j: usize, p_idx: usize, left: bool| -> f64 {
        let a = if left { bundle.left_limit(j, p_idx) } else { bundle.state(j, p_idx) };
        match bundle2 {
            Some(b2) => {
                let b = if left { b2.left_limit(j, p_idx) } else { b2.state(j, p_idx) };
                (0..k).map(|c| (a[c] - b[c] - shift[c]).powi(2)).sum::<f64>().sqrt()
            }
            None => (0..k).map(|c| (a[c] - x[c]).powi(2)).sum::<f64>().sqrt(),
        }
    };
    let sums = chunked_sum(bundle.n_paths, 2 * n_nodes, |path, acc| {
        let mut sup: f64 = 0.0;
        for j in 0..n_nodes {
            sup = sup.max(deviation(j, path, true)).max(deviation(j, path, false));
            let v = sup.powi(p as i32);
            acc[j] += v;
            acc[n_nodes + j] += v * v;
        }
    });
    let n = bundle.n_paths as f64;
    let moments: Vec<f64> = sums[..n_nodes].iter().map(|s| s / n).collect();
    let std_errors: Vec<f64> = (0..n_nodes)
        .map(|j| {
            let var = (sums[n_nodes + j] / n - moments[j].powi(2)).max(0.0);
            (var / (n - 1.0).max(1.0)).sqrt()
        })
        .collect();
    let norm_p = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt().powi(p as i32);
    let (variant, scale) = match bundle2 {
        Some(_) => (MomentVariant::Difference, norm_p(&shift)),
        None => (MomentVariant::Displacement, 1.0 + norm_p(x)),
    };
    let elapsed: Vec<f64> = bundle.grid.nodes().iter().map(|s| s - bundle.grid.t0).collect();
    let design: Vec<f64> = elapsed.iter().map(|e| e * scale).collect();
    let (constant, residual) = crate::stats::fit_through_origin(&design, &moments);
    let monotone = moments.windows(2).all(|w| w[1] >= w[0]);
    Ok(MomentReport {
        variant,
        p,
        elapsed,
        moments,
        std_errors,
        scale,
        constant,
        residual,
        monotone,
        n_paths: bundle.n_paths,
    })
}
