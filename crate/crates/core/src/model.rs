//! Problem data for the forward-backward system and sampled checks of the
//! structural bounds the theory relies on.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{fit_increment_class, GrowthFit, IncrementSample};
use crate::levy::{Decay, JumpMeasure, LevyMeasure};
use crate::rng::{stream, StreamTag};

/// (t, x, out): drift into `out[..k]`, diffusion into `out[..k*d]` row-major.
pub type StateFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// (t, x, e, out): jump size into `out[..k]`.
pub type JumpFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// (t, x, y, z, q).
pub type GeneratorFn = Arc<dyn Fn(f64, &[f64], &[f64], &[f64], f64) -> f64 + Send + Sync>;
/// (t, x, e).
pub type WeightFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// (component, t, x).
pub type ExactFn = Arc<dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// k
    pub state: usize,
    /// d
    pub brownian: usize,
    /// m
    pub system: usize,
    /// ℓ
    pub mark: usize,
}

impl Dims {
    pub fn scalar() -> Self {
        Dims { state: 1, brownian: 1, system: 1, mark: 1 }
    }
}

/// How the jump channel enters the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// q = ∫ γ_i(t, x, e) ζ(e) λ(de)
    #[default]
    GammaIntegral,
    /// q = ‖ζ‖_{L²(λ)}
    NormCoupling,
}

/// Coefficients (b, σ, β), terminal values g, generators h, jump weights γ,
/// the Lévy measure and the coupling mode.
///
/// All callables must be safe to call concurrently.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub dims: Dims,
    pub horizon: f64,
    pub drift: StateFn,
    pub diffusion: StateFn,
    pub jump: JumpFn,
    /// β does not depend on x (lets the simulator cache the compensator).
    pub jump_state_independent: bool,
    pub terminal: Vec<TerminalFn>,
    pub generator: Vec<GeneratorFn>,
    pub weight: Vec<WeightFn>,
    pub measure: LevyMeasure,
    pub coupling: CouplingMode,
    /// Known solution u^i(t, x), when there is one.
    pub exact: Option<ExactFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("measure", &self.measure)
            .field("coupling", &self.coupling)
            .finish()
    }
}

impl ModelSpec {
    /// All coefficients zero, g = h = γ = 0.
    pub fn new(name: &str, dims: Dims, horizon: f64, measure: LevyMeasure) -> Result<Self> {
        if dims.state == 0 || dims.brownian == 0 || dims.system == 0 || dims.mark == 0 {
            return Err(Error::InvalidInput(format!("all dimensions must be positive: {dims:?}")));
        }
        if measure.dim() != dims.mark {
            return Err(Error::InvalidInput(format!(
                "measure lives in dimension {} but the mark dimension is {}",
                measure.dim(),
                dims.mark
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        let m = dims.system;
        Ok(Self {
            name: name.to_string(),
            dims,
            horizon,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            jump: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            jump_state_independent: true,
            terminal: vec![Arc::new(|_: &[f64]| 0.0); m],
            generator: vec![Arc::new(|_, _: &[f64], _: &[f64], _: &[f64], _| 0.0); m],
            weight: vec![Arc::new(|_, _: &[f64], _: &[f64]| 0.0); m],
            measure,
            coupling: CouplingMode::GammaIntegral,
            exact: None,
        })
    }

    pub fn with_drift(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_diffusion(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(f);
        self
    }

    pub fn with_jump(
        mut self,
        f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        state_independent: bool,
    ) -> Self {
        self.jump = Arc::new(f);
        self.jump_state_independent = state_independent;
        self
    }

    pub fn with_terminal(mut self, i: usize, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal[i] = Arc::new(g);
        self
    }

    pub fn with_generator(
        mut self,
        i: usize,
        h: impl Fn(f64, &[f64], &[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.generator[i] = Arc::new(h);
        self
    }

    pub fn with_weight(mut self, i: usize, gamma: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.weight[i] = Arc::new(gamma);
        self
    }

    pub fn with_coupling(mut self, mode: CouplingMode) -> Self {
        self.coupling = mode;
        self
    }

    pub fn with_measure(mut self, measure: LevyMeasure) -> Result<Self> {
        if measure.dim() != self.dims.mark {
            return Err(Error::InvalidInput("measure dimension does not match the mark dimension".into()));
        }
        self.measure = measure;
        Ok(self)
    }

    pub fn with_exact(mut self, f: impl Fn(usize, f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(f));
        self
    }

    pub fn jump_at(&self, t: f64, x: &[f64], e: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.state];
        (self.jump)(t, x, e, &mut out);
        out
    }

    pub fn drift_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.state];
        (self.drift)(t, x, &mut out);
        out
    }

    pub fn diffusion_at(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims.state * self.dims.brownian];
        (self.diffusion)(t, x, &mut out);
        out
    }
}

/// q for component `i` at (t, x) against `measure`, given the jump functional ζ.
pub fn coupling_scalar(
    spec: &ModelSpec,
    i: usize,
    measure: &dyn JumpMeasure,
    t: f64,
    x: &[f64],
    zeta: &dyn Fn(&[f64]) -> f64,
    decay: Decay,
) -> Result<f64> {
    if measure.is_null() {
        return Ok(0.0);
    }
    match spec.coupling {
        CouplingMode::GammaIntegral => {
            let gamma = &spec.weight[i];
            measure.integrate_decaying(&|e| gamma(t, x, e) * zeta(e), Decay::Linear.product(decay))
        }
        CouplingMode::NormCoupling => {
            let sq = measure.integrate_decaying(&|e| zeta(e).powi(2), decay.product(decay))?;
            Ok(sq.max(0.0).sqrt())
        }
    }
}

/// f^{(i)}(t, x, y, z, ζ) = h^{(i)}(t, x, y, z, q(ζ)).
#[derive(Clone, Copy)]
pub struct ComposedGenerator<'a> {
    spec: &'a ModelSpec,
    component: usize,
}

pub fn compose_generator(spec: &ModelSpec, i: usize) -> Result<ComposedGenerator<'_>> {
    if i >= spec.dims.system {
        return Err(Error::InvalidInput(format!("component {i} out of range (m = {})", spec.dims.system)));
    }
    Ok(ComposedGenerator { spec, component: i })
}

impl ComposedGenerator<'_> {
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64], z: &[f64], zeta: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<f64> {
        let q = coupling_scalar(self.spec, self.component, &self.spec.measure, t, x, zeta, decay)?;
        Ok((self.spec.generator[self.component])(t, x, y, z, q))
    }
}

/// Which coordinates of the argument are perturbed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directions {
    All,
    Coordinates(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub constant: f64,
    pub samples: usize,
    pub witness: (Vec<f64>, Vec<f64>),
}

/// Points are snapped to a 2^-24 lattice so difference quotients of linear
/// functions are computed without rounding.
fn snap(v: f64) -> f64 {
    const SCALE: f64 = 16_777_216.0;
    (v * SCALE).round() / SCALE
}

/// Largest sampled difference quotient over pairs in the box: a lower bound
/// on the Lipschitz constant along the selected coordinates.
pub fn estimate_lipschitz(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    directions: &Directions,
    samples: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if samples < 2 {
        return Err(Error::InvalidInput("estimate_lipschitz needs at least 2 samples".into()));
    }
    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(Error::InvalidInput(format!("degenerate box {lo:?} .. {hi:?}")));
    }
    let dim = lo.len();
    let coords: Vec<usize> = match directions {
        Directions::All => (0..dim).collect(),
        Directions::Coordinates(c) => c.clone(),
    };
    if coords.is_empty() || coords.iter().any(|c| *c >= dim) {
        return Err(Error::InvalidInput(format!("bad coordinate selection {coords:?}")));
    }
    let mut rng = stream(seed, 0, StreamTag::Aux(1));
    let mut best = LipschitzEstimate { constant: 0.0, samples, witness: (lo.to_vec(), lo.to_vec()) };
    let mut p = vec![0.0; dim];
    let mut q = vec![0.0; dim];
    for s in 0..samples {
        for c in 0..dim {
            p[c] = snap(lo[c] + (hi[c] - lo[c]) * rng.random::<f64>());
        }
        q.copy_from_slice(&p);
        if s % 2 == 0 {
            for &c in &coords {
                q[c] = snap(lo[c] + (hi[c] - lo[c]) * rng.random::<f64>());
            }
        } else {
            for &c in &coords {
                let scale = (hi[c] - lo[c]) * 10f64.powf(-1.0 - 3.0 * rng.random::<f64>());
                q[c] = snap((p[c] + scale * (2.0 * rng.random::<f64>() - 1.0)).clamp(lo[c], hi[c]));
            }
        }
        let dist = coords.iter().map(|&c| (p[c] - q[c]).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let ratio = (f(&p) - f(&q)).abs() / dist;
        if ratio > best.constant {
            best.constant = ratio;
            best.witness = (p.clone(), q.clone());
        }
    }
    Ok(best)
}

/// Region probed by [`check_assumptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub t: (f64, f64),
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    /// |y|, |z|, |q| are probed in [-r, r].
    pub y_radius: f64,
    pub z_radius: f64,
    pub q_radius: f64,
}

impl DomainBox {
    /// [0, T] × [-r, r]^k with unit radii for (y, z, q).
    pub fn centered(spec: &ModelSpec, r: f64) -> Self {
        DomainBox {
            t: (0.0, spec.horizon),
            x_lo: vec![-r; spec.dims.state],
            x_hi: vec![r; spec.dims.state],
            y_radius: 1.0,
            z_radius: 1.0,
            q_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub constant: f64,
    /// Growth exponent p for class fits.
    pub exponent: Option<f64>,
    pub samples: usize,
    pub witness: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
    pub limitations: Vec<String>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Largest (y, z, q)-Lipschitz estimate over the generators.
    pub fn generator_lipschitz(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with("generator_lipschitz"))
            .map(|c| c.constant)
            .fold(0.0, f64::max)
    }
}

/// Dyadic radii at which mark bounds are probed, from the support radius down.
const MARK_BANDS: i32 = 30;

struct Sampler<'a> {
    rng: rand_chacha::ChaCha8Rng,
    bx: &'a DomainBox,
    mark_dim: usize,
}

impl Sampler<'_> {
    fn time(&mut self) -> f64 {
        self.bx.t.0 + (self.bx.t.1 - self.bx.t.0) * self.rng.random::<f64>()
    }

    fn state(&mut self) -> Vec<f64> {
        self.bx.x_lo.iter().zip(&self.bx.x_hi).map(|(a, b)| a + (b - a) * self.rng.random::<f64>()).collect()
    }

    fn symmetric(&mut self, n: usize, r: f64) -> Vec<f64> {
        (0..n).map(|_| r * (2.0 * self.rng.random::<f64>() - 1.0)).collect()
    }

    /// Mark with norm uniform in [r/2, r] and a random direction.
    fn mark(&mut self, r: f64) -> Vec<f64> {
        let radius = r * (0.5 + 0.5 * self.rng.random::<f64>());
        if self.mark_dim == 1 {
            return vec![if self.rng.random::<bool>() { radius } else { -radius }];
        }
        let mut v: Vec<f64> = (0..self.mark_dim).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.rng)).collect();
        let n = v.iter().map(|a: &f64| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a *= radius / n);
        v
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Sampled bound |φ(t, x, e)| ≤ C(1∧|e|) over dyadic mark bands. Fails when the
/// band maxima of |φ| / (1∧|e|) keep growing as |e| → 0.
fn mark_bound_check(
    name: &str,
    spec: &ModelSpec,
    sampler: &mut Sampler<'_>,
    per_band: usize,
    probe: &mut dyn FnMut(&mut Sampler<'_>, &[f64]) -> (f64, Vec<f64>),
) -> AssumptionCheck {
    let top = spec.measure.support_radius();
    let mut band_max = Vec::with_capacity(MARK_BANDS as usize);
    let mut constant: f64 = 0.0;
    let mut witness = Vec::new();
    let mut smallest_witness = Vec::new();
    let mut samples = 0;
    for b in 0..MARK_BANDS {
        let r = top * 2f64.powi(-b);
        let mut m: f64 = 0.0;
        for _ in 0..per_band {
            let e = sampler.mark(r);
            let (value, point) = probe(sampler, &e);
            let ratio = value / norm(&e).min(1.0);
            samples += 1;
            if ratio > m {
                m = ratio;
                if b == MARK_BANDS - 1 {
                    smallest_witness = point.clone();
                }
            }
            if ratio > constant || witness.is_empty() {
                constant = constant.max(ratio);
                witness = point;
            }
        }
        band_max.push((r, m));
    }
    // Ratios at |e| ≤ 1/8 against those near |e| = 1.
    let near_one = band_max.iter().filter(|(r, _)| (0.25..=2.0).contains(r)).map(|b| b.1).fold(0.0, f64::max);
    let small: Vec<(f64, f64)> = band_max.iter().copied().filter(|(r, m)| *r < 0.125 && *m > 0.0).collect();
    let mut passed = constant.is_finite();
    if small.len() >= 2 {
        let (r0, m0) = small[0];
        let (r1, m1) = *small.last().unwrap();
        let slope = (m1.ln() - m0.ln()) / (r1.ln() - r0.ln());
        if slope < -0.25 && m1 > 4.0 * near_one.max(m0) {
            passed = false;
            witness = smallest_witness;
        }
    }
    AssumptionCheck { name: name.into(), constant, exponent: None, samples, witness, passed }
}

fn class_check(name: &str, samples: usize, sampler: &mut Sampler<'_>, f: &mut dyn FnMut(&mut Sampler<'_>, &[f64], &[f64]) -> f64) -> AssumptionCheck {
    let mut incs = Vec::with_capacity(samples);
    let mut witness = Vec::new();
    let mut worst = 0.0;
    for _ in 0..samples {
        let a = sampler.state();
        let b = sampler.state();
        let d = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        if d == 0.0 {
            continue;
        }
        let ratio = f(sampler, &a, &b) / d;
        if ratio > worst {
            worst = ratio;
            witness = a.iter().chain(&b).copied().collect();
        }
        incs.push(IncrementSample { norm_a: norm(&a), norm_b: norm(&b), ratio });
    }
    let GrowthFit { c, p } = fit_increment_class(&incs);
    AssumptionCheck {
        name: name.into(),
        constant: c,
        exponent: Some(p),
        samples: incs.len(),
        witness,
        passed: c.is_finite() && p.is_finite(),
    }
}

/// Sampled surrogates for the structural assumptions: mark bounds on β and
/// γ_i, Lipschitz bounds on b and σ, class-𝒰 fits of g^i and x ↦ h^{(i)}, and
/// (y, z, q)-Lipschitz constants of h^{(i)}.
pub fn check_assumptions(spec: &ModelSpec, bx: &DomainBox, samples: usize, seed: u64) -> Result<AssumptionReport> {
    let Dims { state: k, brownian: d, system: m, mark: l } = spec.dims;
    if bx.x_lo.len() != k || bx.x_hi.len() != k {
        return Err(Error::InvalidInput("domain box dimension does not match the state dimension".into()));
    }
    let samples = samples.max(2 * MARK_BANDS as usize);
    let per_band = (samples / MARK_BANDS as usize).max(1);
    let mut sampler = Sampler { rng: stream(seed, 0, StreamTag::Aux(2)), bx, mark_dim: l };
    let mut checks = Vec::new();
    let mut out = vec![0.0; k];
    let mut out2 = vec![0.0; k];

    checks.push(mark_bound_check("jump_bound", spec, &mut sampler, per_band, &mut |s, e| {
        let (t, x) = (s.time(), s.state());
        (spec.jump)(t, &x, e, &mut out);
        (norm(&out), [vec![t], x, e.to_vec()].concat())
    }));
    checks.push(mark_bound_check("jump_lipschitz", spec, &mut sampler, per_band, &mut |s, e| {
        let (t, x, x2) = (s.time(), s.state(), s.state());
        (spec.jump)(t, &x, e, &mut out);
        (spec.jump)(t, &x2, e, &mut out2);
        let dx = norm(&x.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>()).max(1e-300);
        let dj = norm(&out.iter().zip(&out2).map(|(a, b)| a - b).collect::<Vec<_>>());
        (dj / dx, [vec![t], x, x2, e.to_vec()].concat())
    }));
    for i in 0..m {
        let gamma = &spec.weight[i];
        checks.push(mark_bound_check(&format!("weight_bound[{i}]"), spec, &mut sampler, per_band, &mut |s, e| {
            let (t, x) = (s.time(), s.state());
            (gamma(t, &x, e).abs(), [vec![t], x, e.to_vec()].concat())
        }));
        checks.push(mark_bound_check(&format!("weight_lipschitz[{i}]"), spec, &mut sampler, per_band, &mut |s, e| {
            let (t, x, x2) = (s.time(), s.state(), s.state());
            let dx = norm(&x.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>()).max(1e-300);
            ((gamma(t, &x, e) - gamma(t, &x2, e)).abs() / dx, [vec![t], x, x2, e.to_vec()].concat())
        }));
    }

    // b and σ: Lipschitz in x, per output entry.
    for (label, f, width) in [("drift_lipschitz", &spec.drift, k), ("diffusion_lipschitz", &spec.diffusion, k * d)] {
        let t_probe: Vec<f64> = (0..4).map(|_| sampler.time()).collect();
        let mut best = LipschitzEstimate { constant: 0.0, samples: 0, witness: (vec![], vec![]) };
        for (n, t) in t_probe.into_iter().enumerate() {
            for c in 0..width {
                let eval = |x: &[f64]| {
                    let mut o = vec![0.0; width];
                    f(t, x, &mut o);
                    o[c]
                };
                let est = estimate_lipschitz(&eval, &bx.x_lo, &bx.x_hi, &Directions::All, samples / 4, seed ^ (n * 97 + c) as u64)?;
                best.samples += est.samples;
                if est.constant > best.constant {
                    best.constant = est.constant;
                    best.witness = est.witness;
                }
            }
        }
        checks.push(AssumptionCheck {
            name: label.into(),
            constant: best.constant,
            exponent: None,
            samples: best.samples,
            witness: [best.witness.0, best.witness.1].concat(),
            passed: best.constant.is_finite(),
        });
    }

    for i in 0..m {
        let g = &spec.terminal[i];
        checks.push(class_check(&format!("terminal_class[{i}]"), samples, &mut sampler, &mut |_, a, b| (g(a) - g(b)).abs()));
        let h = &spec.generator[i];
        checks.push(class_check(&format!("generator_x_class[{i}]"), samples, &mut sampler, &mut |s, a, b| {
            let t = s.time();
            let y = s.symmetric(m, bx.y_radius);
            let z = s.symmetric(d, bx.z_radius);
            let q = s.symmetric(1, bx.q_radius)[0];
            (h(t, a, &y, &z, q) - h(t, b, &y, &z, q)).abs()
        }));

        // (y, z, q) packed into one vector for the Lipschitz probe.
        let mut lo = vec![-bx.y_radius; m];
        lo.extend(vec![-bx.z_radius; d]);
        lo.push(-bx.q_radius);
        let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
        let mut best = LipschitzEstimate { constant: 0.0, samples: 0, witness: (vec![], vec![]) };
        for n in 0..8 {
            let (t, x) = (sampler.time(), sampler.state());
            let eval = |a: &[f64]| h(t, &x, &a[..m], &a[m..m + d], a[m + d]);
            let est = estimate_lipschitz(&eval, &lo, &hi, &Directions::All, (samples / 8).max(2), seed ^ (1000 + 31 * i + n) as u64)?;
            best.samples += est.samples;
            if est.constant > best.constant {
                best.constant = est.constant;
                best.witness = ([vec![t], x.clone(), est.witness.0].concat(), est.witness.1);
            }
        }
        checks.push(AssumptionCheck {
            name: format!("generator_lipschitz[{i}]"),
            constant: best.constant,
            exponent: None,
            samples: best.samples,
            witness: [best.witness.0, best.witness.1].concat(),
            passed: best.constant.is_finite(),
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(AssumptionReport {
        checks,
        passed,
        limitations: vec![
            "x-regularity of h is probed at finitely many (y, z, q); uniformity in (y, z, q) is not established".into(),
            "constants are sampled lower bounds, not certified bounds".into(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(measure: LevyMeasure) -> ModelSpec {
        ModelSpec::new("t", Dims::scalar(), 1.0, measure).unwrap()
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = LevyMeasure::zero(2).unwrap();
        assert!(ModelSpec::new("t", Dims::scalar(), 1.0, m).is_err());
        assert!(ModelSpec::new("t", Dims::scalar(), 0.0, LevyMeasure::zero(1).unwrap()).is_err());
    }

    #[test]
    fn lipschitz_of_linear_and_constant() {
        let lin = |p: &[f64]| 3.0 * p[0] + 7.0;
        let est = estimate_lipschitz(&lin, &[-1.0], &[1.0], &Directions::All, 1000, 1).unwrap();
        assert!(est.constant <= 3.0 && est.constant >= 3.0 - 1e-9, "{}", est.constant);
        let c = estimate_lipschitz(&|_| 2.0, &[-1.0], &[1.0], &Directions::All, 100, 1).unwrap();
        assert_eq!(c.constant, 0.0);
    }

    #[test]
    fn lipschitz_respects_selected_coordinates() {
        let f = |p: &[f64]| 100.0 * p[0] + 2.0 * p[1];
        let est = estimate_lipschitz(&f, &[-1.0, -1.0], &[1.0, 1.0], &Directions::Coordinates(vec![1]), 500, 3).unwrap();
        assert!((est.constant - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_jump_fails_with_small_witness() {
        let spec = base(LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).unwrap()).with_jump(|_, _, _, o| o[0] = 1.0, true);
        let r = check_assumptions(&spec, &DomainBox::centered(&spec, 2.0), 3000, 5).unwrap();
        let c = r.get("jump_bound").unwrap();
        assert!(!c.passed);
        assert!(c.witness[2].abs() < 1e-3, "witness {:?}", c.witness);
    }
}
