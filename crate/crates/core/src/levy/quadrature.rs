//! Radial shell quadrature against a Lévy density.
//!
//! Shells are geometric with ratio 2 from the support radius down to a floor,
//! split at declared breakpoints, each integrated with 16-point Gauss–Legendre.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Innermost radius reached by the untruncated rule.
pub const SHELL_FLOOR: f64 = 9.094_947_017_729_282e-13; // 2^-40
pub const GL_POINTS: usize = 16;

/// Declared decay of an integrand near e = 0: |φ(e)| = O(|e|^p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Decay {
    Bounded,
    Linear,
    Quadratic,
}

impl Decay {
    pub fn exponent(self) -> i32 {
        match self {
            Decay::Bounded => 0,
            Decay::Linear => 1,
            Decay::Quadratic => 2,
        }
    }

    /// Decay of a product of two integrands.
    pub fn product(self, other: Decay) -> Decay {
        match (self.exponent() + other.exponent()).min(2) {
            0 => Decay::Bounded,
            1 => Decay::Linear,
            _ => Decay::Quadratic,
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub(crate) fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// Unit directions and weights whose sum is the surface area of S^{ℓ-1}.
pub fn angular_rule(dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match dim {
        1 => Ok((vec![1.0, -1.0], vec![1.0, 1.0])),
        2 => {
            let n = 32;
            let mut dirs = Vec::with_capacity(2 * n);
            for j in 0..n {
                let a = 2.0 * PI * (j as f64 + 0.5) / n as f64;
                dirs.extend_from_slice(&[a.cos(), a.sin()]);
            }
            Ok((dirs, vec![2.0 * PI / n as f64; n]))
        }
        3 => {
            let (cz, wz) = gauss_legendre(8);
            let nphi = 16;
            let mut dirs = Vec::new();
            let mut w = Vec::new();
            for (c, wc) in cz.iter().zip(&wz) {
                let s = (1.0 - c * c).sqrt();
                for j in 0..nphi {
                    let a = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                    dirs.extend_from_slice(&[s * a.cos(), s * a.sin(), *c]);
                    w.push(wc * 2.0 * PI / nphi as f64);
                }
            }
            Ok((dirs, w))
        }
        _ => Err(Error::InvalidInput(format!("mark dimension {dim} unsupported (1..=3)"))),
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Shell {
    pub lo: f64,
    pub hi: f64,
    pub start: usize,
    pub end: usize,
    /// Exact factor-2 shell below every breakpoint: usable for ratio tests.
    pub dyadic: bool,
}

/// Precomputed quadrature nodes over a radial range, density folded into the weights.
#[derive(Debug, Clone)]
pub struct ShellRule {
    dim: usize,
    marks: Vec<f64>,
    weights: Vec<f64>,
    shells: Vec<Shell>,
    /// True when the rule approximates a neighbourhood of 0 and needs a tail model.
    open_inner: bool,
}

/// Shell edges, descending, from `outer` to `inner` with breakpoints inserted.
pub(crate) fn shell_edges(outer: f64, inner: f64, breakpoints: &[f64]) -> Vec<(f64, f64, bool)> {
    let mut dyadic = vec![outer];
    let mut r = outer;
    while r / 2.0 > inner {
        r /= 2.0;
        dyadic.push(r);
    }
    let lowest_break = breakpoints
        .iter()
        .copied()
        .filter(|b| *b > inner && *b < outer)
        .fold(f64::INFINITY, f64::min);
    let mut edges: Vec<f64> = dyadic.clone();
    edges.push(inner);
    edges.extend(breakpoints.iter().copied().filter(|b| *b > inner && *b < outer));
    edges.sort_by(|a, b| b.partial_cmp(a).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
    edges
        .windows(2)
        .map(|w| {
            let (hi, lo) = (w[0], w[1]);
            let is_dyadic = (hi / lo - 2.0).abs() < 1e-12 && hi <= lowest_break;
            (lo, hi, is_dyadic)
        })
        .collect()
}

impl ShellRule {
    /// Build the rule for `density` over `inner ≤ |e| ≤ outer`.
    pub(crate) fn build(
        dim: usize,
        density: &dyn Fn(&[f64]) -> f64,
        outer: f64,
        inner: f64,
        breakpoints: &[f64],
        open_inner: bool,
    ) -> Result<Self> {
        let (dirs, dir_w) = angular_rule(dim)?;
        let (gx, gw) = gl16();
        let mut marks = Vec::new();
        let mut weights = Vec::new();
        let mut shells = Vec::new();
        let mut e = vec![0.0; dim];
        if outer > inner {
            for (lo, hi, dyadic) in shell_edges(outer, inner, breakpoints) {
                let start = weights.len();
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (x, w) in gx.iter().zip(gw) {
                    let r = mid + half * x;
                    let radial_w = w * half * r.powi(dim as i32 - 1);
                    for (d, dw) in dirs.chunks(dim).zip(&dir_w) {
                        for (ei, di) in e.iter_mut().zip(d) {
                            *ei = r * di;
                        }
                        let rho = density(&e);
                        if !(rho >= 0.0) || !rho.is_finite() {
                            return Err(Error::QuadratureFailure(format!(
                                "density is negative or non-finite ({rho}) at |e| = {r:.3e}"
                            )));
                        }
                        marks.extend_from_slice(&e);
                        weights.push(radial_w * dw * rho);
                    }
                }
                shells.push(Shell { lo, hi, start, end: weights.len(), dyadic });
            }
        }
        Ok(Self { dim, marks, weights, shells, open_inner })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total mass covered by the rule.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Visit every (mark, weight) pair; used by callers that batch their integrands.
    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.marks.chunks(self.dim).zip(self.weights.iter().copied())
    }

    /// Innermost radius covered by the rule.
    pub fn inner_radius(&self) -> f64 {
        self.shells.last().map_or(0.0, |s| s.lo)
    }

    /// Integrate φ, extrapolating the inner tail for open rules.
    ///
    /// The inner tail is modelled as a geometric continuation of the last two
    /// dyadic shells; a non-decaying shell sequence is reported as `SlowDecay`.
    pub fn integrate(&self, phi: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<f64> {
        self.integrate_from(phi, decay, f64::INFINITY)
    }

    /// Integrate φ only over shells with `hi ≤ max_radius` edges (shells are
    /// never split; `max_radius` must be a shell edge or ∞).
    pub(crate) fn integrate_from(&self, phi: &dyn Fn(&[f64]) -> f64, _decay: Decay, max_radius: f64) -> Result<f64> {
        let mut total = 0.0;
        let mut prev_dyadic: Option<f64> = None;
        let mut growth_run = 0usize;
        let mut last_ratio = 0.0;
        let mut last_abs = 0.0;
        let mut prev_gross: Option<f64> = None;
        let mut gross_ratio = 0.0;
        let mut finished_early = false;
        for shell in &self.shells {
            if shell.hi > max_radius * (1.0 + 1e-12) {
                continue;
            }
            let (mut s, mut gross) = (0.0, 0.0);
            for idx in shell.start..shell.end {
                let w = self.weights[idx];
                if w != 0.0 {
                    let v = w * phi(&self.marks[idx * self.dim..(idx + 1) * self.dim]);
                    s += v;
                    gross += v.abs();
                }
            }
            if !s.is_finite() {
                return Err(Error::QuadratureFailure(format!(
                    "non-finite shell integral on [{:.3e}, {:.3e}]",
                    shell.lo, shell.hi
                )));
            }
            total += s;
            if !self.open_inner || !shell.dyadic {
                prev_dyadic = None;
                continue;
            }
            // a shell that cancels down to rounding carries no decay information
            let a = if s.abs() <= 1e-13 * gross { 0.0 } else { s.abs() };
            if let Some(g) = prev_gross.filter(|g| *g > 0.0) {
                gross_ratio = gross / g;
            }
            prev_gross = Some(gross);
            // signed sums of a cancelling integrand stall at the rounding level
            // while |φ| keeps decaying; only a stalled |φ| is slow decay
            let gross_decays = gross_ratio < 0.999;
            if let Some(p) = prev_dyadic {
                if p > 0.0 {
                    last_ratio = a / p;
                    if last_ratio >= 0.999 && a > 1e-300 && !gross_decays {
                        growth_run += 1;
                    } else {
                        growth_run = 0;
                    }
                } else if a > 0.0 && !gross_decays {
                    growth_run += 1;
                }
                if growth_run >= 3 && shell.hi < 1e-3 {
                    return Err(Error::SlowDecay { radius: shell.lo, ratio: last_ratio });
                }
            }
            if a == 0.0 && prev_dyadic == Some(0.0) && shell.hi < 1e-3 {
                last_abs = 0.0;
                finished_early = true;
                break;
            }
            prev_dyadic = Some(a);
            last_abs = if a == 0.0 { 0.0 } else { s };
            if a <= 1e-16 * total.abs() && last_ratio < 0.9 && shell.hi < 1e-3 {
                finished_early = true;
                break;
            }
        }
        if self.open_inner && !finished_early && last_abs != 0.0 {
            if last_ratio >= 0.999 && gross_ratio < 0.999 {
                // the tail is bounded by the decaying |φ| shells
                last_ratio = gross_ratio;
            }
            if last_ratio >= 0.999 {
                return Err(Error::SlowDecay { radius: self.inner_radius(), ratio: last_ratio });
            }
            total += last_abs * last_ratio / (1.0 - last_ratio);
        }
        Ok(total)
    }
}

/// Sampled check that |φ(e)| / |e|^p stays bounded as |e| → 0.
pub(crate) fn check_declared_decay(dim: usize, phi: &dyn Fn(&[f64]) -> f64, decay: Decay) -> Result<()> {
    let p = decay.exponent();
    if p == 0 {
        return Ok(());
    }
    let (dirs, _) = angular_rule(dim)?;
    let mut e = vec![0.0; dim];
    let mut scaled = Vec::new();
    for j in [6, 12, 18, 24] {
        let r = 2f64.powi(-j);
        let mut m: f64 = 0.0;
        for d in dirs.chunks(dim) {
            for (ei, di) in e.iter_mut().zip(d) {
                *ei = r * di;
            }
            m = m.max(phi(&e).abs() / r.powi(p));
        }
        scaled.push((r, m));
    }
    let reference = scaled[0].1.max(scaled[1].1);
    let (r_last, last) = scaled[3];
    let monotone = scaled.windows(2).all(|w| w[1].1 >= w[0].1);
    if monotone && last > 16.0 * reference.max(1e-300) && last > 1e-12 {
        return Err(Error::SlowDecay { radius: r_last, ratio: last / reference.max(1e-300) });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((m30 - 2.0 / 31.0).abs() < 1e-13);
    }

    #[test]
    fn angular_rules_sum_to_sphere_area() {
        for (dim, area) in [(1, 2.0), (2, 2.0 * PI), (3, 4.0 * PI)] {
            let (d, w) = angular_rule(dim).unwrap();
            assert_eq!(d.len(), w.len() * dim);
            assert!((w.iter().sum::<f64>() - area).abs() < 1e-12);
        }
        assert!(angular_rule(4).is_err());
    }

    #[test]
    fn shell_edges_split_at_breakpoints() {
        let edges = shell_edges(50.0, 1e-3, &[1.0]);
        assert!((edges[0].1 - 50.0).abs() < 1e-15);
        assert!(edges.iter().any(|(lo, _, _)| (*lo - 1.0).abs() < 1e-15));
        assert!(edges.iter().any(|(_, hi, _)| (*hi - 1.0).abs() < 1e-15));
        for w in edges.windows(2) {
            assert_eq!(w[0].0, w[1].1);
        }
        assert!((edges.last().unwrap().0 - 1e-3).abs() < 1e-18);
    }
}
