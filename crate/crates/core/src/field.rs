//! Value functions u^i(t, x) tabulated on space-time lattices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{fit_envelope, GrowthFit};

/// Anything the nonlocal operators and the residual checker can evaluate.
pub trait Field: Sync {
    fn components(&self) -> usize;
    fn dim(&self) -> usize;
    fn value(&self, i: usize, t: f64, x: &[f64]) -> f64;
    /// Finite-difference step matched to the field's own resolution.
    fn resolution(&self, t: f64) -> f64;
}

/// Closure-backed field, exact at every point.
pub struct FnField<F> {
    components: usize,
    dim: usize,
    f: F,
    step: f64,
}

impl<F: Fn(usize, f64, &[f64]) -> f64 + Sync> FnField<F> {
    pub fn new(components: usize, dim: usize, f: F) -> Self {
        Self { components, dim, f, step: 1e-3 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

impl<F: Fn(usize, f64, &[f64]) -> f64 + Sync> Field for FnField<F> {
    fn components(&self) -> usize {
        self.components
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        (self.f)(i, t, x)
    }
    fn resolution(&self, _t: f64) -> f64 {
        self.step
    }
}

/// Values of all components on a uniform tensor lattice over a box.
/// Node index runs with the first coordinate fastest; `values[node * m + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    pub components: usize,
    pub values: Vec<f64>,
}

impl Slice {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>, components: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(Error::InvalidInput("slice box and node counts disagree in dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(b > a) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput(format!("degenerate slice box {lo:?} .. {hi:?}")));
        }
        if counts.iter().any(|n| *n < 2) {
            return Err(Error::InvalidInput("a slice needs at least 2 nodes per coordinate".into()));
        }
        let n: usize = counts.iter().product();
        Ok(Self { lo, hi, counts, components, values: vec![0.0; n * components] })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn spacing(&self, c: usize) -> f64 {
        (self.hi[c] - self.lo[c]) / (self.counts[c] - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|c| self.spacing(c)).fold(f64::INFINITY, f64::min)
    }

    pub fn node(&self, idx: usize, x: &mut [f64]) {
        let mut r = idx;
        for c in 0..self.dim() {
            let n = self.counts[c];
            let ic = r % n;
            r /= n;
            x[c] = if ic == n - 1 { self.hi[c] } else { self.lo[c] + ic as f64 * self.spacing(c) };
        }
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        (0..self.n_nodes())
            .map(|i| {
                self.node(i, &mut x);
                x.clone()
            })
            .collect()
    }

    /// Set every node from `f(x, out)` with `out` of length m.
    pub fn fill(&mut self, f: impl Fn(&[f64], &mut [f64])) {
        let m = self.components;
        let mut x = vec![0.0; self.dim()];
        for idx in 0..self.n_nodes() {
            self.node(idx, &mut x);
            f(&x, &mut self.values[idx * m..(idx + 1) * m]);
        }
    }

    pub fn at(&self, idx: usize, i: usize) -> f64 {
        self.values[idx * self.components + i]
    }

    /// Interpolate at x projected onto the box.
    pub fn interpolate_clamped(&self, i: usize, x: &[f64], scratch: &mut [f64]) -> f64 {
        for c in 0..self.dim() {
            scratch[c] = x[c].clamp(self.lo[c], self.hi[c]);
        }
        self.interpolate(i, &scratch[..self.dim()])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, a), b)| *v >= *a && *v <= *b)
    }

    /// Multilinear inside the box; outside, the boundary cell's multilinear
    /// form is continued (linear extrapolation along each axis).
    pub fn interpolate(&self, i: usize, x: &[f64]) -> f64 {
        let k = self.dim();
        let m = self.components;
        if k == 1 {
            let h = self.spacing(0);
            let n = self.counts[0];
            let s = (x[0] - self.lo[0]) / h;
            let ic = (s.floor().max(0.0) as usize).min(n - 2);
            let f = s - ic as f64;
            let v0 = self.values[ic * m + i];
            let v1 = self.values[(ic + 1) * m + i];
            return v0 + f * (v1 - v0);
        }
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut frac = [0.0f64; 8];
        let mut strides = [0usize; 8];
        for c in 0..k {
            let n = self.counts[c];
            let s = (x[c] - self.lo[c]) / self.spacing(c);
            let ic = (s.floor().max(0.0) as usize).min(n - 2);
            frac[c] = s - ic as f64;
            base += ic * stride;
            strides[c] = stride;
            stride *= n;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut idx = base;
            for c in 0..k {
                if corner >> c & 1 == 1 {
                    w *= frac[c];
                    idx += strides[c];
                } else {
                    w *= 1.0 - frac[c];
                }
            }
            acc += w * self.values[idx * m + i];
        }
        acc
    }
}

/// A lone slice is a time-independent field with plain linear extrapolation.
impl Field for Slice {
    fn components(&self) -> usize {
        self.components
    }
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn value(&self, i: usize, _t: f64, x: &[f64]) -> f64 {
        self.interpolate(i, x)
    }
    fn resolution(&self, _t: f64) -> f64 {
        self.min_spacing()
    }
}

/// u^i on a space-time lattice: one spatial slice per time node, linear in
/// time between slices, with a fitted growth envelope per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub times: Vec<f64>,
    pub slices: Vec<Slice>,
    pub envelopes: Vec<GrowthFit>,
}

/// Extrapolated values are kept within this multiple of the growth envelope.
const ENVELOPE_SLACK: f64 = 2.0;

impl ValueField {
    pub fn new(times: Vec<f64>, slices: Vec<Slice>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::InvalidInput("a field needs one slice per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("field times must be strictly increasing".into()));
        }
        let (m, k) = (slices[0].components, slices[0].dim());
        if slices.iter().any(|s| s.components != m || s.dim() != k) {
            return Err(Error::InvalidInput("field slices disagree in shape".into()));
        }
        if slices.iter().any(|s| s.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("field contains non-finite values".into()));
        }
        let envelopes = (0..m)
            .map(|i| {
                let pts: Vec<(f64, f64)> = slices
                    .iter()
                    .flat_map(|s| s.nodes().into_iter().enumerate().map(move |(idx, x)| (norm(&x), s.at(idx, i).abs())))
                    .collect();
                fit_envelope(pts.into_iter())
            })
            .collect();
        Ok(Self { times, slices, envelopes })
    }

    /// Tabulate f(i, t, x) on a fixed box at the given times.
    pub fn from_fn(
        times: &[f64],
        lo: &[f64],
        hi: &[f64],
        counts: &[usize],
        components: usize,
        f: impl Fn(usize, f64, &[f64]) -> f64,
    ) -> Result<Self> {
        let slices = times
            .iter()
            .map(|&t| {
                let mut s = Slice::new(lo.to_vec(), hi.to_vec(), counts.to_vec(), components)?;
                s.fill(|x, out| {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = f(i, t, x);
                    }
                });
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times.to_vec(), slices)
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Index of the slice at exactly time t, if any.
    pub fn slice_at(&self, t: f64) -> Option<usize> {
        let idx = self.times.partition_point(|s| *s < t);
        (idx < self.times.len() && self.times[idx] == t).then_some(idx)
    }

    fn slice_value(&self, s: usize, i: usize, x: &[f64]) -> f64 {
        let slice = &self.slices[s];
        let v = slice.interpolate(i, x);
        if slice.contains(x) {
            v
        } else {
            let cap = ENVELOPE_SLACK * self.envelopes[i].bound(norm(x)).max(f64::MIN_POSITIVE);
            v.clamp(-cap, cap)
        }
    }

    /// Largest |self − other| over this field's lattice nodes.
    pub fn sup_distance(&self, other: &dyn Field) -> f64 {
        let mut worst: f64 = 0.0;
        for (s, slice) in self.slices.iter().enumerate() {
            let t = self.times[s];
            for (idx, x) in slice.nodes().iter().enumerate() {
                for i in 0..slice.components {
                    worst = worst.max((slice.at(idx, i) - other.value(i, t, x)).abs());
                }
            }
        }
        worst
    }

    /// Check |u| ≤ C(1 + |x|^p) on every lattice node.
    pub fn envelope_holds(&self) -> bool {
        self.slices.iter().all(|s| {
            s.nodes().iter().enumerate().all(|(idx, x)| {
                (0..s.components).all(|i| s.at(idx, i).abs() <= self.envelopes[i].bound(norm(x)) * (1.0 + 1e-12) + 1e-300)
            })
        })
    }
}

impl Field for ValueField {
    fn components(&self) -> usize {
        self.slices[0].components
    }

    fn dim(&self) -> usize {
        self.slices[0].dim()
    }

    fn value(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.slice_value(0, i, x);
        }
        if t >= self.times[n - 1] {
            return self.slice_value(n - 1, i, x);
        }
        let b = self.times.partition_point(|s| *s <= t);
        let a = b - 1;
        if self.times[a] == t {
            return self.slice_value(a, i, x);
        }
        let w = (t - self.times[a]) / (self.times[b] - self.times[a]);
        (1.0 - w) * self.slice_value(a, i, x) + w * self.slice_value(b, i, x)
    }

    fn resolution(&self, t: f64) -> f64 {
        let b = self.times.partition_point(|s| *s < t).min(self.times.len() - 1);
        let a = b.saturating_sub(1);
        if self.times[b] == t || b == 0 {
            self.slices[b].min_spacing()
        } else {
            self.slices[a].min_spacing().min(self.slices[b].min_spacing())
        }
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
