//! Lévy measures on E = ℝ^ℓ∖{0}: validation, truncation at the origin,
//! compound-Poisson sampling of the truncated part and singular quadrature.

mod quadrature;
mod sampling;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quadrature::{angular_rule, gauss_legendre, Decay, ShellRule, SHELL_FLOOR};
pub use sampling::{JumpSample, RadialTable};

use quadrature::check_declared_decay;
use sampling::Band;

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Default support radius for densities with unbounded support.
pub const DEFAULT_SUPPORT_RADIUS: f64 = 50.0;

/// A σ-finite measure on ℝ^ℓ∖{0} given by its density.
///
/// For ℓ ≥ 2 the density must be radial (product-radial form), which is what
/// the sampler relies on; ℓ = 1 densities may be asymmetric.
#[derive(Clone)]
pub struct LevyMeasure {
    dim: usize,
    density: DensityFn,
    support_radius: f64,
    singularity_exponent: f64,
    breakpoints: Vec<f64>,
    zero: bool,
    label: String,
    full_rule: Arc<OnceLock<std::result::Result<ShellRule, Error>>>,
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyMeasure")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("support_radius", &self.support_radius)
            .field("singularity_exponent", &self.singularity_exponent)
            .finish()
    }
}

impl LevyMeasure {
    /// Measure on ℝ∖{0} with the given density.
    pub fn line<F>(density: F, support_radius: f64, singularity_exponent: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(1, Arc::new(move |e: &[f64]| density(e[0])), support_radius, singularity_exponent)
    }

    /// Radial measure on ℝ^ℓ∖{0}: dλ/de = profile(|e|).
    pub fn radial<F>(dim: usize, profile: F, support_radius: f64, singularity_exponent: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            dim,
            Arc::new(move |e: &[f64]| profile(e.iter().map(|v| v * v).sum::<f64>().sqrt())),
            support_radius,
            singularity_exponent,
        )
    }

    fn new(dim: usize, density: DensityFn, support_radius: f64, singularity_exponent: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("mark dimension {dim} unsupported (1..=3)")));
        }
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::InvalidInput(format!("support radius must be positive, got {support_radius}")));
        }
        if !(0.0..2.0).contains(&singularity_exponent) {
            return Err(Error::InvalidInput(format!(
                "singularity exponent must lie in [0, 2), got {singularity_exponent}"
            )));
        }
        Ok(Self {
            dim,
            density,
            support_radius,
            singularity_exponent,
            breakpoints: vec![1.0],
            zero: false,
            label: "custom".into(),
            full_rule: Arc::new(OnceLock::new()),
        })
    }

    /// Density c·e^{-|e|}·|e|^{-ℓ-α} restricted to |e| ≤ cutoff.
    pub fn tempered_stable(dim: usize, c: f64, alpha: f64, cutoff: f64) -> Result<Self> {
        if c < 0.0 {
            return Err(Error::InvalidInput(format!("tempered_stable: c must be ≥ 0, got {c}")));
        }
        let d = dim as f64;
        let m = Self::radial(
            dim,
            move |r| if r <= cutoff && r > 0.0 { c * (-r).exp() * r.powf(-d - alpha) } else { 0.0 },
            cutoff,
            alpha,
        )?;
        Ok(m.with_label(format!("tempered_stable(c={c}, alpha={alpha}, cutoff={cutoff})")))
    }

    /// Finite measure of total mass `mass`, uniform on the annulus inner ≤ |e| ≤ radius (ℓ = 1).
    pub fn finite_uniform(mass: f64, radius: f64, inner: f64) -> Result<Self> {
        if !(mass >= 0.0 && radius > inner && inner >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "finite_uniform needs mass ≥ 0 and 0 ≤ inner < radius (mass={mass}, inner={inner}, radius={radius})"
            )));
        }
        let height = mass / (2.0 * (radius - inner));
        let m = Self::line(
            move |e| {
                let a = e.abs();
                if a >= inner && a <= radius {
                    height
                } else {
                    0.0
                }
            },
            radius,
            0.0,
        )?;
        let mut m = m.with_breakpoints(&[inner, radius]);
        m.zero = mass == 0.0;
        Ok(m.with_label(format!("finite_uniform(mass={mass}, radius={radius}, inner={inner})")))
    }

    /// The zero measure.
    pub fn zero(dim: usize) -> Result<Self> {
        let mut m = Self::new(dim, Arc::new(|_: &[f64]| 0.0), 1.0, 0.0)?;
        m.zero = true;
        Ok(m.with_label("zero".into()))
    }

    /// Radii where the density (or 1∧|e|) has kinks; quadrature shells split there.
    pub fn with_breakpoints(mut self, radii: &[f64]) -> Self {
        self.breakpoints.extend(radii.iter().copied().filter(|r| *r > 0.0));
        self.breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.breakpoints.dedup();
        self.full_rule = Arc::new(OnceLock::new());
        self
    }

    pub fn with_label(mut self, label: String) -> Self {
        self.label = label;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn singularity_exponent(&self) -> f64 {
        self.singularity_exponent
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn density(&self, e: &[f64]) -> f64 {
        self.density.as_ref()(e)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn closed_rule(&self, inner: f64, outer: f64) -> Result<ShellRule> {
        ShellRule::build(self.dim, self.density.as_ref(), outer, inner, &self.breakpoints, false)
    }

    /// Quadrature rule reaching down to the shell floor, with tail extrapolation.
    pub fn rule(&self) -> Result<&ShellRule> {
        self.full_rule
            .get_or_init(|| {
                ShellRule::build(self.dim, self.density.as_ref(), self.support_radius, SHELL_FLOOR, &self.breakpoints, true)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// ∫ φ dλ for an integrand with the declared decay at the origin.
    pub fn integrate(&self, phi: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<f64> {
        if self.zero {
            return Ok(0.0);
        }
        check_declared_decay(self.dim, phi, decay)?;
        self.rule()?.integrate(phi, decay)
    }

    /// ∫_{|e| < r} (1∧|e|²) λ(de), the small-jump mass left out by truncation at r.
    pub fn small_jump_mass(&self, r: f64) -> Result<f64> {
        if self.zero {
            return Ok(0.0);
        }
        let sq = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>().min(1.0);
        let total = self.integrate(&sq, Decay::Quadratic)?;
        let outer = if r < self.support_radius {
            self.closed_rule(r, self.support_radius)?.integrate(&sq, Decay::Quadratic)?
        } else {
            0.0
        };
        Ok((total - outer).max(0.0))
    }

    /// Check ∫(1∧|e|²)dλ < ∞ by refining the inner cutoff.
    pub fn validate(&self, refinement_levels: usize) -> Result<ValidationReport> {
        if refinement_levels < 2 {
            return Err(Error::InvalidInput("validate needs at least 2 refinement levels".into()));
        }
        let sq = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>().min(1.0);
        let mut cutoffs = Vec::with_capacity(refinement_levels);
        let mut values = Vec::with_capacity(refinement_levels);
        for level in 1..=refinement_levels {
            let exponent = (40 * level / refinement_levels) as i32;
            let cutoff = (self.support_radius * 2f64.powi(-exponent)).max(SHELL_FLOOR);
            let v = if self.zero { 0.0 } else { self.closed_rule(cutoff, self.support_radius)?.integrate(&sq, Decay::Quadratic)? };
            cutoffs.push(cutoff);
            values.push(v);
        }
        let n = values.len();
        let last = values[n - 1];
        let prev = values[n - 2];
        let passed = (last - prev).abs() <= 1e-6 * last.abs() || (last == 0.0 && prev == 0.0);
        if !passed {
            let inc_last = last - prev;
            let inc_prev = if n >= 3 { prev - values[n - 3] } else { 0.0 };
            if inc_last > 0.0 && (n < 3 || inc_last >= 0.5 * inc_prev) {
                return Err(Error::DivergentIntegral { values });
            }
        }
        let beyond = if self.zero {
            0.0
        } else {
            let r = self.support_radius;
            self.closed_rule(r, 8.0 * r)?.integrate(&sq, Decay::Quadratic)?
        };
        Ok(ValidationReport { cutoffs, values, passed, mass_beyond_support: beyond, relative_tolerance: 1e-6 })
    }

    /// Restriction of λ to {|e| ≥ 1/k}.
    pub fn truncate(&self, k: u32) -> Result<TruncatedMeasure> {
        TruncatedMeasure::new(self.clone(), k)
    }
}

/// Outcome of [`LevyMeasure::validate`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    pub passed: bool,
    /// ∫_{R<|e|<8R}(1∧|e|²)dλ with R the support radius.
    pub mass_beyond_support: f64,
    pub relative_tolerance: f64,
}

impl ValidationReport {
    pub fn value(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// λ_k = λ restricted to {|e| ≥ 1/k}: finite mass, compound-Poisson sampleable.
#[derive(Clone, Debug)]
pub struct TruncatedMeasure {
    base: LevyMeasure,
    k: u32,
    threshold: f64,
    total_mass: f64,
    rule: ShellRule,
    bands: Vec<Band>,
}

impl TruncatedMeasure {
    fn new(base: LevyMeasure, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("truncation level k must be ≥ 1".into()));
        }
        let threshold = 1.0 / k as f64;
        let rule = if threshold < base.support_radius {
            ShellRule::build(base.dim, base.density.as_ref(), base.support_radius, threshold, &base.breakpoints, false)?
        } else {
            ShellRule::build(base.dim, base.density.as_ref(), 0.0, 0.0, &[], false)?
        };
        let total_mass = if base.zero { 0.0 } else { rule.mass() };
        if !total_mass.is_finite() {
            return Err(Error::InfiniteMass { mass: total_mass });
        }
        let bands = if base.zero { Vec::new() } else { sampling::build_bands(&base, threshold)? };
        Ok(Self { base, k, threshold, total_mass, rule, bands })
    }

    pub fn base(&self) -> &LevyMeasure {
        &self.base
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Smallest retained mark norm, 1/k.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn rule(&self) -> &ShellRule {
        &self.rule
    }

    /// ∫_{|e|≥1/k} φ dλ. No singular tail: the region is bounded away from 0.
    pub fn integrate(&self, phi: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        if self.base.zero {
            return Ok(0.0);
        }
        self.rule.integrate(phi, Decay::Bounded)
    }

    /// Jumps of a Poisson random measure with intensity dt⊗λ_k on (t0, t1].
    pub fn sample_jumps(&self, t0: f64, t1: f64, stream: &crate::rng::JumpStream) -> Result<JumpSample> {
        if !(t1 > t0) {
            return Err(Error::InvalidInput(format!("sample_jumps needs t0 < t1 (got {t0}, {t1})")));
        }
        if !self.total_mass.is_finite() {
            return Err(Error::InfiniteMass { mass: self.total_mass });
        }
        Ok(sampling::sample(&self.bands, self.base.dim, self.threshold, t0, t1, stream))
    }
}

/// Anything the nonlocal operators can integrate against.
pub trait JumpMeasure: Send + Sync {
    fn mark_dim(&self) -> usize;
    fn integrate_decaying(&self, phi: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<f64>;
    fn is_null(&self) -> bool;
}

impl JumpMeasure for LevyMeasure {
    fn mark_dim(&self) -> usize {
        self.dim
    }
    fn integrate_decaying(&self, phi: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<f64> {
        self.integrate(phi, decay)
    }
    fn is_null(&self) -> bool {
        self.zero
    }
}

impl JumpMeasure for TruncatedMeasure {
    fn mark_dim(&self) -> usize {
        self.base.dim
    }
    fn integrate_decaying(&self, phi: &dyn Fn(&[f64]) -> f64, _decay: Decay) -> Result<f64> {
        self.integrate(phi)
    }
    fn is_null(&self) -> bool {
        self.base.zero || self.total_mass == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts() -> LevyMeasure {
        LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()
    }

    #[test]
    fn zero_measure_validates_to_zero() {
        let r = LevyMeasure::zero(1).unwrap().validate(4).unwrap();
        assert!(r.passed);
        assert_eq!(r.value(), 0.0);
    }

    #[test]
    fn alpha_above_two_diverges() {
        let m = LevyMeasure::line(|e: f64| e.abs().powf(-3.5), 50.0, 0.0).unwrap();
        assert!(matches!(m.validate(4), Err(Error::DivergentIntegral { .. })));
    }

    #[test]
    fn constant_integrand_against_infinite_activity_is_slow_decay() {
        assert!(matches!(ts().integrate(&|_| 1.0, Decay::Bounded), Err(Error::SlowDecay { .. })));
    }

    #[test]
    fn zero_integrand_is_zero() {
        assert_eq!(ts().integrate(&|_| 0.0, Decay::Quadratic).unwrap(), 0.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(LevyMeasure::tempered_stable(4, 1.0, 0.5, 50.0).is_err());
        assert!(LevyMeasure::tempered_stable(1, 1.0, 2.5, 50.0).is_err());
        assert!(LevyMeasure::finite_uniform(1.0, 1.0, 2.0).is_err());
        assert!(ts().truncate(0).is_err());
    }

    #[test]
    fn truncation_below_support_keeps_everything() {
        let m = LevyMeasure::finite_uniform(2.0, 3.0, 1.0).unwrap();
        for k in [2, 5, 100] {
            let tm = m.truncate(k).unwrap();
            assert!((tm.total_mass() - 2.0).abs() < 1e-12, "k={k}: {}", tm.total_mass());
        }
    }

    #[test]
    fn zero_measure_truncates_to_zero_mass() {
        let m = LevyMeasure::zero(1).unwrap();
        for k in [1, 4, 64] {
            assert_eq!(m.truncate(k).unwrap().total_mass(), 0.0);
        }
    }

    #[test]
    fn negative_density_is_rejected() {
        let m = LevyMeasure::line(|e: f64| -e.abs(), 5.0, 0.0).unwrap();
        assert!(m.integrate(&|e| e[0] * e[0], Decay::Quadratic).is_err());
    }
}
