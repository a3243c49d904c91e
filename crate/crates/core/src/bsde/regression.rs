//! Least-squares projections onto a finite basis of the state.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chunked_sum_with, quantile};

/// Regression basis family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Basis {
    /// Hermite polynomials of total degree ≤ `degree` in standardized coordinates.
    Polynomial { degree: usize },
    /// Per-coordinate quantile cells, affine within each cell.
    Local { cells: usize },
}

impl Default for Basis {
    fn default() -> Self {
        Basis::Polynomial { degree: 4 }
    }
}

/// Spread below which a coordinate is treated as constant.
const DEGENERATE_SPREAD: f64 = 1e-12;

/// Basis functions fitted to one cloud of states.
#[derive(Debug, Clone)]
pub struct Design {
    dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    active: Vec<bool>,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Hermite { exponents: Vec<Vec<usize>>, degree: usize },
    Local { edges: Vec<Vec<f64>>, centers: Vec<Vec<f64>>, n_cells: usize },
}

fn hermite(z: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = z;
    }
    for n in 1..degree {
        out[n + 1] = z * out[n] - n as f64 * out[n - 1];
    }
}

/// Exponent tuples of total degree in `lo..=hi` over `dim` coordinates, graded order.
pub(crate) fn monomials(dim: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a);
            rec(dim, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for total in lo..=hi {
        rec(dim, total, &mut Vec::new(), &mut out);
    }
    out
}

impl Design {
    /// Fit standardization (and cells) to `n` states stored row-major in `xs`.
    pub fn fit(basis: &Basis, xs: &[f64], dim: usize) -> Result<Self> {
        let n = xs.len() / dim;
        if n == 0 {
            return Err(Error::InvalidInput("regression needs at least one sample".into()));
        }
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut active = vec![false; dim];
        for c in 0..dim {
            let col = (0..n).map(|p| xs[p * dim + c]);
            let m = col.clone().sum::<f64>() / n as f64;
            let v = col.map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            mean[c] = m;
            if v.sqrt() > DEGENERATE_SPREAD * (1.0 + m.abs()) {
                scale[c] = v.sqrt();
                active[c] = true;
            }
        }
        let act: Vec<usize> = (0..dim).filter(|c| active[*c]).collect();
        let kind = match *basis {
            Basis::Polynomial { degree } => {
                let exponents = if act.is_empty() {
                    vec![vec![0; dim]]
                } else {
                    monomials(act.len(), 0, degree)
                        .into_iter()
                        .map(|e| {
                            let mut full = vec![0; dim];
                            for (a, c) in act.iter().enumerate() {
                                full[*c] = e[a];
                            }
                            full
                        })
                        .collect()
                };
                Kind::Hermite { exponents, degree }
            }
            Basis::Local { cells } => {
                if cells == 0 {
                    return Err(Error::InvalidInput("local basis needs at least one cell".into()));
                }
                let mut edges = Vec::with_capacity(dim);
                let mut centers = Vec::with_capacity(dim);
                for c in 0..dim {
                    if !active[c] {
                        edges.push(Vec::new());
                        centers.push(vec![0.0]);
                        continue;
                    }
                    let col: Vec<f64> = (0..n).map(|p| (xs[p * dim + c] - mean[c]) / scale[c]).collect();
                    let q: Vec<f64> = (0..=cells).map(|b| quantile(&col, b as f64 / cells as f64)).collect();
                    centers.push(q.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect());
                    edges.push(q[1..cells].to_vec());
                }
                let n_cells = centers.iter().map(|v| v.len()).product();
                Kind::Local { edges, centers, n_cells }
            }
        };
        Ok(Self { dim, mean, scale, active, kind })
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            Kind::Hermite { exponents, .. } => exponents.len(),
            Kind::Local { n_cells, .. } => n_cells * (1 + self.active.iter().filter(|a| **a).count()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every coordinate is constant over the fitted cloud.
    pub fn is_degenerate(&self) -> bool {
        !self.active.iter().any(|a| *a)
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut z = [0.0f64; 8];
        for c in 0..self.dim {
            z[c] = (x[c] - self.mean[c]) / self.scale[c];
        }
        match &self.kind {
            Kind::Hermite { exponents, degree } => {
                let mut h = [[0.0f64; 16]; 8];
                for c in 0..self.dim {
                    hermite(z[c], *degree, &mut h[c][..=*degree]);
                }
                for (o, e) in out.iter_mut().zip(exponents) {
                    let mut v = 1.0;
                    for c in 0..self.dim {
                        v *= h[c][e[c]];
                    }
                    *o = v;
                }
            }
            Kind::Local { edges, centers, .. } => {
                out.fill(0.0);
                let mut cell = 0;
                let mut stride = 1;
                let mut offs = [0.0f64; 8];
                for c in 0..self.dim {
                    let b = edges[c].partition_point(|v| *v <= z[c]);
                    cell += b * stride;
                    stride *= centers[c].len();
                    offs[c] = z[c] - centers[c][b];
                }
                let w = 1 + self.active.iter().filter(|a| **a).count();
                out[cell * w] = 1.0;
                let mut a = 1;
                for c in 0..self.dim {
                    if self.active[c] {
                        out[cell * w + a] = offs[c];
                        a += 1;
                    }
                }
            }
        }
    }
}

/// Normal equations of a least-squares problem, diagonalized once and reused
/// for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct Gram {
    pub n: usize,
    pub width: usize,
    pub condition: f64,
    inverse: DMatrix<f64>,
}

impl Gram {
    /// Σ_p φ(p)φ(p)ᵀ over `n` rows. `features(p, out)` writes row p.
    pub fn build<F>(n: usize, width: usize, features: F, max_condition: f64, step: usize) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let sums = chunked_sum_with(n, width * width, || vec![0.0; width], |p, phi, acc| {
            features(p, phi);
            for a in 0..width {
                let pa = phi[a];
                if pa == 0.0 {
                    continue;
                }
                for b in a..width {
                    acc[a * width + b] += pa * phi[b];
                }
            }
        });
        let mut g = DMatrix::<f64>::zeros(width, width);
        for a in 0..width {
            for b in a..width {
                let v = sums[a * width + b] / n as f64;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(g);
        let hi = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= max_condition) {
            return Err(Error::SingularRegression { step, condition });
        }
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose() / n as f64;
        Ok(Self { n, width, condition, inverse })
    }

    /// Coefficients for `targets` right-hand sides and their residual variances.
    pub fn solve<F, T>(&self, features: F, n_targets: usize, target: T) -> Projection
    where
        F: Fn(usize, &mut [f64]) + Sync,
        T: Fn(usize, &mut [f64]) + Sync,
    {
        let (w, n) = (self.width, self.n);
        let rhs = chunked_sum_with(n, w * n_targets, || (vec![0.0; w], vec![0.0; n_targets]), |p, (phi, y), acc| {
            features(p, phi);
            target(p, y);
            for (t, yt) in y.iter().enumerate() {
                for a in 0..w {
                    acc[t * w + a] += phi[a] * yt;
                }
            }
        });
        let coeffs: Vec<Vec<f64>> = (0..n_targets)
            .map(|t| {
                let b = nalgebra::DVector::from_column_slice(&rhs[t * w..(t + 1) * w]);
                (&self.inverse * b).iter().copied().collect()
            })
            .collect();
        let rss = chunked_sum_with(n, n_targets, || (vec![0.0; w], vec![0.0; n_targets]), |p, (phi, y), acc| {
            features(p, phi);
            target(p, y);
            for t in 0..n_targets {
                let fit: f64 = coeffs[t].iter().zip(phi.iter()).map(|(c, f)| c * f).sum();
                acc[t] += (y[t] - fit).powi(2);
            }
        });
        let dof = (n as f64 - w as f64).max(1.0);
        Projection { coeffs, residual_variance: rss.iter().map(|r| r / dof).collect() }
    }

    /// φᵀ(ΦᵀΦ)⁻¹φ: fitted-value variance per unit residual variance.
    pub fn leverage(&self, phi: &[f64]) -> f64 {
        let w = self.width;
        let mut s = 0.0;
        for a in 0..w {
            let mut r = 0.0;
            for b in 0..w {
                r += self.inverse[(a, b)] * phi[b];
            }
            s += phi[a] * r;
        }
        s.max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub coeffs: Vec<Vec<f64>>,
    pub residual_variance: Vec<f64>,
}

impl Projection {
    pub fn eval(&self, t: usize, phi: &[f64]) -> f64 {
        self.coeffs[t].iter().zip(phi).map(|(c, f)| c * f).sum()
    }
}
