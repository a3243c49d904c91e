//! Picard iteration on short windows: (z, q) are frozen, y is solved, and the
//! frozen pair is replaced by the one implied by the new y until it settles.

use super::lsmc::{Engine, Frozen, Source, StepOutput};
use super::{BsdeSolution, SolverSettings, WindowReport};
use crate::error::{Error, Result};
use crate::model::{check_assumptions, DomainBox, ModelSpec};
use crate::sde::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowLength {
    /// δ = 1/(4Ĉ²) with Ĉ the sampled (y, z, q)-Lipschitz constant of h.
    Auto,
    Fixed(f64),
}

/// Ratios are only formed while the delta is above this floor.
const DELTA_FLOOR: f64 = 1e-13;
const PLATEAU_RATIO: f64 = 0.95;

/// Window length used by [`WindowLength::Auto`], before capping at T − t.
pub fn auto_window(spec: &ModelSpec) -> Result<f64> {
    let report = check_assumptions(spec, &DomainBox::centered(spec, 3.0), 4000, 0)?;
    let c = report.generator_lipschitz();
    Ok(if c > 0.0 { 1.0 / (4.0 * c * c) } else { f64::INFINITY })
}

fn window_delta(old: &[Frozen], new: &[Frozen], n: usize, dt: f64) -> f64 {
    let mut total = 0.0;
    for (a, b) in old.iter().zip(new) {
        let dz: f64 = if a.z_path.is_empty() {
            b.z_path.iter().map(|v| v * v).sum()
        } else {
            a.z_path.iter().zip(&b.z_path).map(|(x, y)| (x - y).powi(2)).sum()
        };
        let dq: f64 = if a.q_path.is_empty() {
            b.q_path.iter().map(|v| v * v).sum()
        } else {
            a.q_path.iter().zip(&b.q_path).map(|(x, y)| (x - y).powi(2)).sum()
        };
        total += dt * (dz + dq);
    }
    (total / n as f64).sqrt()
}

fn contraction_ratio(deltas: &[f64]) -> Option<f64> {
    let floor = DELTA_FLOOR.max(1e-10 * deltas.first().copied().unwrap_or(0.0));
    deltas.windows(2).filter(|w| w[0] > floor).map(|w| w[1] / w[0]).reduce(f64::max)
}

/// Solve window by window backward from T. Each window starts from (z, q) = 0
/// and takes its terminal y and field slice from the window after it.
pub fn picard_subinterval(
    spec: &ModelSpec,
    bundle: &PathBundle,
    settings: &SolverSettings,
    length: WindowLength,
) -> Result<BsdeSolution> {
    let engine = Engine::new(spec, bundle, settings)?;
    let grid = bundle.grid;
    let span = grid.horizon - grid.t0;
    let delta = match length {
        WindowLength::Auto => auto_window(spec)?.min(span),
        WindowLength::Fixed(d) if d > 0.0 => d.min(span),
        WindowLength::Fixed(d) => return Err(Error::InvalidInput(format!("window length must be positive, got {d}"))),
    };
    let per_window = ((delta / grid.dt()) * (1.0 + 1e-9)).floor().max(1.0) as usize;

    let (y_terminal, slice_terminal) = engine.terminal()?;
    let mut y_next = y_terminal.clone();
    let mut slice_next = slice_terminal.clone();
    let mut collected: Vec<Vec<StepOutput>> = Vec::new();
    let mut reports = Vec::new();
    let mut last = grid.n_steps;
    let mut window = 0;
    while last > 0 {
        let first = last.saturating_sub(per_window);
        let mut frozen = vec![Frozen::default(); last - first];
        let mut deltas = Vec::new();
        let out = loop {
            let out = engine.run(first, last, y_next.clone(), slice_next.clone(), Source::Frozen(&frozen), true)?;
            let fresh: Vec<Frozen> = out.iter().map(|s| s.fresh.clone().expect("fresh estimates requested")).collect();
            let d = window_delta(&frozen, &fresh, bundle.n_paths, grid.dt());
            deltas.push(d);
            frozen = fresh;
            if d < settings.picard_tolerance {
                break out;
            }
            let n = deltas.len();
            let plateau = n >= 3
                && deltas[n - 2] > DELTA_FLOOR
                && deltas[n - 3] > DELTA_FLOOR
                && deltas[n - 1] / deltas[n - 2] >= PLATEAU_RATIO
                && deltas[n - 2] / deltas[n - 3] >= PLATEAU_RATIO;
            if plateau || n >= settings.picard_max_iterations {
                return Err(Error::ContractionStall { window, last_deltas: [deltas[n - 2.min(n)], deltas[n - 1]] });
            }
        };
        y_next = out[0].y.clone();
        slice_next = out[0].slice.clone();
        reports.push(WindowReport {
            first_step: first,
            last_step: last,
            iterations_used: deltas.len().saturating_sub(1).max(1),
            contraction_ratio: contraction_ratio(&deltas),
            deltas,
        });
        collected.push(out);
        last = first;
        window += 1;
    }
    collected.reverse();
    reports.reverse();
    let steps: Vec<StepOutput> = collected.into_iter().flatten().collect();
    let mut sol = engine.assemble(y_terminal, slice_terminal, steps)?;
    sol.windows = reports;
    Ok(sol)
}
