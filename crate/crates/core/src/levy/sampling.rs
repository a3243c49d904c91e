use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::quadrature::{angular_rule, gauss_legendre};
use super::LevyMeasure;
use crate::error::Result;
use crate::rng::JumpStream;

/// Log-spaced nodes per dyadic band.
const NODES_PER_BAND: usize = 512;

/// Tabulated radial CDF on one band, inverted by bisection plus linear interpolation.
#[derive(Debug, Clone)]
pub struct RadialTable {
    radii: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RadialTable {
    pub(crate) fn build(lo: f64, hi: f64, breakpoints: &[f64], radial_density: &dyn Fn(f64) -> f64) -> Self {
        let ratio = (hi / lo).ln() / NODES_PER_BAND as f64;
        let mut radii: Vec<f64> = (0..=NODES_PER_BAND).map(|i| lo * (ratio * i as f64).exp()).collect();
        radii[NODES_PER_BAND] = hi;
        radii.extend(breakpoints.iter().copied().filter(|b| *b > lo && *b < hi));
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup();
        let (gx, gw) = gauss_legendre(4);
        let mut cumulative = Vec::with_capacity(radii.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in radii.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let s: f64 = gx.iter().zip(&gw).map(|(x, wt)| wt * half * radial_density(mid + half * x)).sum();
            acc += s.max(0.0);
            cumulative.push(acc);
        }
        Self { radii, cumulative }
    }

    pub fn mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Radius with cumulative mass fraction `u ∈ [0, 1)`.
    pub fn invert(&self, u: f64) -> f64 {
        let target = u * self.mass();
        let idx = self.cumulative.partition_point(|c| *c <= target).clamp(1, self.cumulative.len() - 1);
        let (c0, c1) = (self.cumulative[idx - 1], self.cumulative[idx]);
        let (r0, r1) = (self.radii[idx - 1], self.radii[idx]);
        if c1 > c0 {
            r0 + (r1 - r0) * ((target - c0) / (c1 - c0))
        } else {
            r0
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Band {
    index: u32,
    /// ℓ = 1: positive and negative branches. ℓ ≥ 2: one radial marginal.
    tables: Vec<RadialTable>,
    mass: f64,
}

/// Dyadic bands [R 2^{-(b+1)}, R 2^{-b}) covering [threshold, R].
pub(crate) fn build_bands(m: &LevyMeasure, threshold: f64) -> Result<Vec<Band>> {
    let r = m.support_radius();
    let mut bands = Vec::new();
    if threshold >= r {
        return Ok(bands);
    }
    let dim = m.dim();
    let (_, dir_w) = angular_rule(dim)?;
    let area: f64 = dir_w.iter().sum();
    let mut b = 0u32;
    loop {
        let hi = r * 2f64.powi(-(b as i32));
        let lo = hi / 2.0;
        let tables = if dim == 1 {
            vec![
                RadialTable::build(lo, hi, m.breakpoints(), &|x| m.density(&[x])),
                RadialTable::build(lo, hi, m.breakpoints(), &|x| m.density(&[-x])),
            ]
        } else {
            vec![RadialTable::build(lo, hi, m.breakpoints(), &|x| {
                let mut probe = vec![0.0; dim];
                probe[0] = x;
                area * x.powi(dim as i32 - 1) * m.density(&probe)
            })]
        };
        let mass = tables.iter().map(RadialTable::mass).sum();
        bands.push(Band { index: b, tables, mass });
        if lo <= threshold {
            break;
        }
        b += 1;
    }
    Ok(bands)
}

/// Jump times (sorted) and flattened marks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpSample {
    pub dim: usize,
    pub times: Vec<f64>,
    pub marks: Vec<f64>,
}

impl JumpSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mark(&self, j: usize) -> &[f64] {
        &self.marks[j * self.dim..(j + 1) * self.dim]
    }

    /// Keep only jumps whose mark norm is at least `threshold`.
    pub fn thinned(&self, threshold: f64) -> JumpSample {
        let mut out = JumpSample { dim: self.dim, ..Default::default() };
        for j in 0..self.len() {
            let m = self.mark(j);
            if m.iter().map(|v| v * v).sum::<f64>().sqrt() >= threshold {
                out.times.push(self.times[j]);
                out.marks.extend_from_slice(m);
            }
        }
        out
    }
}

pub(crate) fn sample(bands: &[Band], dim: usize, threshold: f64, t0: f64, t1: f64, stream: &JumpStream) -> JumpSample {
    let mut events: Vec<(f64, Vec<f64>)> = Vec::new();
    for band in bands {
        if band.mass <= 0.0 {
            continue;
        }
        let mut rng = stream.band(band.index);
        let mut t = t0;
        loop {
            let w: f64 = Exp1.sample(&mut rng);
            t += w / band.mass;
            if t > t1 {
                break;
            }
            let u_branch: f64 = rng.random();
            let u_radius: f64 = rng.random();
            let mark = if dim == 1 {
                let pos = band.tables[0].mass();
                if u_branch * band.mass < pos {
                    vec![band.tables[0].invert(u_radius)]
                } else {
                    vec![-band.tables[1].invert(u_radius)]
                }
            } else {
                let radius = band.tables[0].invert(u_radius);
                let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                for d in &mut dir {
                    *d *= radius / norm;
                }
                dir
            };
            let radius = mark.iter().map(|v| v * v).sum::<f64>().sqrt();
            if radius >= threshold {
                events.push((t, mark));
            }
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = JumpSample { dim, times: Vec::with_capacity(events.len()), marks: Vec::with_capacity(events.len() * dim) };
    for (t, m) in events {
        out.times.push(t);
        out.marks.extend(m);
    }
    out
}
