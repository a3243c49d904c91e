//! Least-squares Monte Carlo for the coupled backward system with jumps.
//!
//! At each step the continuation value, Z and the coupling scalar q are
//! projected on a basis of the state. q comes either from the regressed value
//! field itself (`u(x + β) − u(x)` integrated against λ) or from a regression
//! of the jump part of y on paths that jump once in the step.

mod lsmc;
mod picard;
pub mod regression;
mod truncation;

use serde::{Deserialize, Serialize};

pub use picard::{picard_subinterval, WindowLength};
pub use regression::Basis;
pub use truncation::{truncation_study, ConvergenceTable, TruncationRow};

use crate::error::Result;
use crate::field::{Field, ValueField};
use crate::model::{CouplingMode, ModelSpec};
use crate::sde::{PathBundle, TimeGrid};
use lsmc::{Engine, Source};
use regression::Design;

/// How the coupling scalar is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QEstimator {
    #[default]
    Representation,
    Martingale,
}

/// Measure used for q in representation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMeasure {
    #[default]
    Full,
    /// λ_k of the path bundle.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub basis: Basis,
    pub estimator: QEstimator,
    pub q_measure: QMeasure,
    /// Lattice nodes per coordinate for value slices (default by dimension).
    pub lattice_nodes: Option<usize>,
    pub fixed_point_tolerance: f64,
    pub max_fixed_point_passes: usize,
    pub max_condition: f64,
    pub picard_tolerance: f64,
    pub picard_max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            basis: Basis::default(),
            estimator: QEstimator::default(),
            q_measure: QMeasure::default(),
            lattice_nodes: None,
            fixed_point_tolerance: 1e-10,
            max_fixed_point_passes: 50,
            max_condition: 1e10,
            picard_tolerance: 1e-6,
            picard_max_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub condition: f64,
    /// Residual standard deviation of the continuation regression per component.
    pub residual_sd: Vec<f64>,
    pub fixed_point_passes: usize,
    /// Largest standard error of the fitted continuation over the lattice.
    pub field_standard_error: f64,
    pub degenerate: bool,
}

/// Per-window Picard record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub first_step: usize,
    pub last_step: usize,
    pub deltas: Vec<f64>,
    pub iterations_used: usize,
    /// Largest ratio of successive deltas above the noise floor.
    pub contraction_ratio: Option<f64>,
}

/// Û(x, β) ≈ u(x + β) − u(x) fitted on single-jump paths of one step.
#[derive(Debug, Clone)]
pub struct JumpRegression {
    design: Design,
    marks: Vec<Vec<usize>>,
    coeffs: Vec<Vec<f64>>,
    pub n_jumps: usize,
}

impl JumpRegression {
    fn features(&self, x: &[f64], beta: &[f64], out: &mut [f64]) {
        let w = self.design.len();
        let mut phi = [0.0f64; 64];
        self.design.eval(x, &mut phi[..w]);
        for (a, e) in self.marks.iter().enumerate() {
            let mono: f64 = e.iter().zip(beta).map(|(p, b)| b.powi(*p as i32)).product();
            for (f, ph) in phi[..w].iter().enumerate() {
                out[a * w + f] = mono * ph;
            }
        }
    }

    pub fn eval(&self, i: usize, x: &[f64], beta: &[f64]) -> f64 {
        let mut f = vec![0.0; self.coeffs[i].len()];
        self.features(x, beta, &mut f);
        f.iter().zip(&self.coeffs[i]).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Pathwise (Y, Z, q), regressed value fields and diagnostics.
///
/// Layouts: `y[j][p * m + i]`, `z[j][(p * m + i) * d + c]`, `q[j][p * m + i]`.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub components: usize,
    pub brownian_dim: usize,
    pub n_paths: usize,
    pub estimator: QEstimator,
    pub coupling: CouplingMode,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub fields: ValueField,
    pub diagnostics: Vec<StepDiagnostics>,
    pub windows: Vec<WindowReport>,
    pub jump_regressions: Vec<Option<JumpRegression>>,
    /// Root sum of squares of the per-step slice standard errors.
    pub regression_tolerance: f64,
    /// Y at the first node with a standard error from the pathwise
    /// representation g(X_T) + Σ h Δt.
    pub estimates: Vec<Estimate>,
}

impl BsdeSolution {
    pub fn y_at(&self, j: usize, p: usize, i: usize) -> f64 {
        self.y[j][p * self.components + i]
    }

    pub fn q_at(&self, j: usize, p: usize, i: usize) -> f64 {
        self.q[j][p * self.components + i]
    }

    pub fn z_at(&self, j: usize, p: usize, i: usize) -> &[f64] {
        let d = self.brownian_dim;
        let o = (p * self.components + i) * d;
        &self.z[j][o..o + d]
    }

    /// u^i(t, x) from the regressed fields.
    pub fn value(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        self.fields.value(i, t, x)
    }

    pub fn picard_iterations_used(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.iterations_used).collect()
    }
}

/// Backward least-squares recursion over the bundle's grid.
pub fn solve_lsmc(spec: &ModelSpec, bundle: &PathBundle, settings: &SolverSettings) -> Result<BsdeSolution> {
    let engine = Engine::new(spec, bundle, settings)?;
    let source = match settings.estimator {
        QEstimator::Representation => Source::Representation,
        QEstimator::Martingale => Source::Martingale,
    };
    let (y, slice) = engine.terminal()?;
    let steps = engine.run(0, bundle.grid.n_steps, y.clone(), slice.clone(), source, false)?;
    engine.assemble(y, slice, steps)
}

/// As [`solve_lsmc`] with q computed from a given field instead of the solution.
pub fn solve_frozen_nonlocal(
    spec: &ModelSpec,
    bundle: &PathBundle,
    settings: &SolverSettings,
    u_prev: &dyn Field,
) -> Result<BsdeSolution> {
    if u_prev.components() != spec.dims.system || u_prev.dim() != spec.dims.state {
        return Err(crate::error::Error::InvalidInput("frozen field shape differs from the model".into()));
    }
    let engine = Engine::new(spec, bundle, settings)?;
    let (y, slice) = engine.terminal()?;
    let steps = engine.run(0, bundle.grid.n_steps, y.clone(), slice.clone(), Source::Exogenous(u_prev), false)?;
    engine.assemble(y, slice, steps)
}
