//! Built-in models and measures, addressable by name from configuration.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::levy::{Decay, LevyMeasure, DEFAULT_SUPPORT_RADIUS};
use crate::model::{CouplingMode, Dims, ModelSpec};

fn unit_cap(e: &[f64]) -> f64 {
    e[0].abs().min(1.0)
}

fn default_cutoff() -> f64 {
    DEFAULT_SUPPORT_RADIUS
}

/// Measure registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureChoice {
    /// c e^{-|e|} |e|^{-1-α} on 0 < |e| ≤ cutoff.
    TemperedStable {
        c: f64,
        alpha: f64,
        #[serde(default = "default_cutoff")]
        cutoff: f64,
    },
    /// Total mass spread uniformly over inner ≤ |e| ≤ radius.
    FiniteUniform {
        mass: f64,
        radius: f64,
        #[serde(default)]
        inner: f64,
    },
    Zero,
}

impl MeasureChoice {
    pub fn build(&self) -> Result<LevyMeasure> {
        match *self {
            MeasureChoice::TemperedStable { c, alpha, cutoff } => LevyMeasure::tempered_stable(1, c, alpha, cutoff),
            MeasureChoice::FiniteUniform { mass, radius, inner } => LevyMeasure::finite_uniform(mass, radius, inner),
            MeasureChoice::Zero => LevyMeasure::zero(1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeasureChoice::TemperedStable { .. } => "tempered_stable",
            MeasureChoice::FiniteUniform { .. } => "finite_uniform",
            MeasureChoice::Zero => "zero",
        }
    }
}

/// b, σ constant, β = c(1∧|e|), γ = 1∧|e|, g(x) = x, h ≡ const.
/// u(t, x) = x + (b + h)(T − t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearAdditive {
    pub drift: f64,
    pub volatility: f64,
    pub jump_scale: f64,
    pub horizon: f64,
    pub generator_constant: f64,
}

impl Default for LinearAdditive {
    fn default() -> Self {
        Self { drift: 0.1, volatility: 0.2, jump_scale: 0.3, horizon: 1.0, generator_constant: 0.0 }
    }
}

impl LinearAdditive {
    pub fn build(&self, measure: LevyMeasure) -> Result<ModelSpec> {
        let Self { drift, volatility, jump_scale, horizon, generator_constant } = *self;
        Ok(ModelSpec::new("linear_additive", Dims::scalar(), horizon, measure)?
            .with_drift(move |_, _, o| o[0] = drift)
            .with_diffusion(move |_, _, o| o[0] = volatility)
            .with_jump(move |_, _, e, o| o[0] = jump_scale * unit_cap(e), true)
            .with_terminal(0, |x| x[0])
            .with_generator(0, move |_, _, _, _, _| generator_constant)
            .with_weight(0, |_, _, e| unit_cap(e))
            .with_exact(move |_, t, x| x[0] + (drift + generator_constant) * (horizon - t)))
    }
}

/// Two components coupled through each other's values and a q-channel with
/// no monotonicity: h¹ = ½ sin y² − ½ sin 2q, h² = ½ cos y¹ − 0.6 q + 0.2 z,
/// with γ₁ = clamp(e, −1, 1) cos x changing sign and γ₂ = −(1∧|e|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoupledSine {
    pub drift: f64,
    pub volatility: f64,
    pub volatility_amplitude: f64,
    pub jump_scale: f64,
    pub horizon: f64,
}

impl Default for CoupledSine {
    fn default() -> Self {
        Self { drift: 0.1, volatility: 0.3, volatility_amplitude: 0.1, jump_scale: 0.3, horizon: 1.0 }
    }
}

impl CoupledSine {
    pub fn build(&self, measure: LevyMeasure) -> Result<ModelSpec> {
        let Self { drift, volatility, volatility_amplitude, jump_scale, horizon } = *self;
        let dims = Dims { state: 1, brownian: 1, system: 2, mark: 1 };
        Ok(ModelSpec::new("coupled_sine", dims, horizon, measure)?
            .with_drift(move |_, _, o| o[0] = drift)
            .with_diffusion(move |_, x, o| o[0] = volatility + volatility_amplitude * x[0].sin())
            .with_jump(move |_, _, e, o| o[0] = jump_scale * e[0].clamp(-1.0, 1.0), true)
            .with_terminal(0, |x| x[0].sin())
            .with_terminal(1, |x| x[0].cos())
            .with_generator(0, |_, _, y, _, q| 0.5 * y[1].sin() - 0.5 * (2.0 * q).sin())
            .with_generator(1, |_, _, y, z, q| 0.5 * y[0].cos() - 0.6 * q + 0.2 * z[0])
            .with_weight(0, |_, x, e| e[0].clamp(-1.0, 1.0) * x[0].cos())
            .with_weight(1, |_, _, e| -unit_cap(e)))
    }
}

/// Scalar model whose jump channel enters through ‖ζ‖_{L²(λ)}:
/// h = q_weight·q + y_weight·y, g = sin x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormCouplingDemo {
    pub drift: f64,
    pub volatility: f64,
    pub jump_scale: f64,
    pub horizon: f64,
    pub q_weight: f64,
    pub y_weight: f64,
}

impl Default for NormCouplingDemo {
    fn default() -> Self {
        Self { drift: 0.1, volatility: 0.2, jump_scale: 0.3, horizon: 1.0, q_weight: -0.5, y_weight: 0.1 }
    }
}

impl NormCouplingDemo {
    pub fn build(&self, measure: LevyMeasure) -> Result<ModelSpec> {
        let Self { drift, volatility, jump_scale, horizon, q_weight, y_weight } = *self;
        Ok(ModelSpec::new("norm_coupling_demo", Dims::scalar(), horizon, measure)?
            .with_drift(move |_, _, o| o[0] = drift)
            .with_diffusion(move |_, _, o| o[0] = volatility)
            .with_jump(move |_, _, e, o| o[0] = jump_scale * unit_cap(e), true)
            .with_terminal(0, |x| x[0].sin())
            .with_generator(0, move |_, _, y, _, q| q_weight * q + y_weight * y[0])
            .with_weight(0, |_, _, e| unit_cap(e))
            .with_coupling(CouplingMode::NormCoupling))
    }
}

/// Linear dynamics of [`LinearAdditive`] with g(x) = x² and h = 0:
/// u(t, x) = (x + bτ)² + (σ² + ∫β²dλ)τ, τ = T − t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticPayoff {
    pub drift: f64,
    pub volatility: f64,
    pub jump_scale: f64,
    pub horizon: f64,
}

impl Default for QuadraticPayoff {
    fn default() -> Self {
        Self { drift: 0.1, volatility: 0.2, jump_scale: 0.3, horizon: 1.0 }
    }
}

impl QuadraticPayoff {
    pub fn build(&self, measure: LevyMeasure) -> Result<ModelSpec> {
        let Self { drift, volatility, jump_scale, horizon } = *self;
        let jump_var = jump_scale * jump_scale * measure.integrate(&|e| unit_cap(e).powi(2), Decay::Quadratic)?;
        let var_rate = volatility * volatility + jump_var;
        Ok(ModelSpec::new("quadratic_payoff", Dims::scalar(), horizon, measure)?
            .with_drift(move |_, _, o| o[0] = drift)
            .with_diffusion(move |_, _, o| o[0] = volatility)
            .with_jump(move |_, _, e, o| o[0] = jump_scale * unit_cap(e), true)
            .with_terminal(0, |x| x[0] * x[0])
            .with_weight(0, |_, _, e| unit_cap(e))
            .with_exact(move |_, t, x| {
                let tau = horizon - t;
                (x[0] + drift * tau).powi(2) + var_rate * tau
            }))
    }
}

/// Model registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ZooModel {
    LinearAdditive(LinearAdditive),
    CoupledSine(CoupledSine),
    NormCouplingDemo(NormCouplingDemo),
    QuadraticPayoff(QuadraticPayoff),
}

impl ZooModel {
    pub const NAMES: [&'static str; 4] = ["linear_additive", "coupled_sine", "norm_coupling_demo", "quadratic_payoff"];

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "linear_additive" => ZooModel::LinearAdditive(Default::default()),
            "coupled_sine" => ZooModel::CoupledSine(Default::default()),
            "norm_coupling_demo" => ZooModel::NormCouplingDemo(Default::default()),
            "quadratic_payoff" => ZooModel::QuadraticPayoff(Default::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ZooModel::LinearAdditive(_) => "linear_additive",
            ZooModel::CoupledSine(_) => "coupled_sine",
            ZooModel::NormCouplingDemo(_) => "norm_coupling_demo",
            ZooModel::QuadraticPayoff(_) => "quadratic_payoff",
        }
    }

    pub fn build(&self, measure: LevyMeasure) -> Result<ModelSpec> {
        match self {
            ZooModel::LinearAdditive(p) => p.build(measure),
            ZooModel::CoupledSine(p) => p.build(measure),
            ZooModel::NormCouplingDemo(p) => p.build(measure),
            ZooModel::QuadraticPayoff(p) => p.build(measure),
        }
    }
}
