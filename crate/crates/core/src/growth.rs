//! Polynomial growth fits: |Δf| ≤ C(1 + |x|^p + |x′|^p)|x − x′| and |f| ≤ C(1 + |x|^p).

use serde::{Deserialize, Serialize};

/// Fitted constants of a growth bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub c: f64,
    pub p: f64,
}

impl GrowthFit {
    pub fn bound(&self, norm: f64) -> f64 {
        self.c * (1.0 + norm.powf(self.p))
    }
}

/// One sampled increment: norms of the two points and |Δf| / |x − x′|.
#[derive(Debug, Clone, Copy)]
pub struct IncrementSample {
    pub norm_a: f64,
    pub norm_b: f64,
    pub ratio: f64,
}

const MAX_EXPONENT: f64 = 8.0;

/// Log-log slope of the per-bin maxima over dyadic radius bins with r ≥ 1,
/// each maximum placed at its own radius.
fn ladder_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut bins: std::collections::BTreeMap<i32, (f64, f64)> = std::collections::BTreeMap::new();
    for (r, v) in points {
        if r >= 1.0 && v > 0.0 && v.is_finite() {
            let b = r.log2().floor() as i32;
            let e = bins.entry(b).or_insert((0.0, r));
            if v > e.0 {
                *e = (v, r);
            }
        }
    }
    if bins.len() < 2 {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = bins.values().map(|(v, r)| (r.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        0.0
    } else {
        (sxy / sxx).clamp(0.0, MAX_EXPONENT)
    }
}

/// Smallest C for the fitted p such that every sampled increment satisfies
/// ratio ≤ C(1 + |x|^p + |x′|^p). The exponent comes from the dyadic ladder of
/// maximal ratios over radius max(|x|, |x′|).
pub fn fit_increment_class(samples: &[IncrementSample]) -> GrowthFit {
    let p = ladder_slope(samples.iter().map(|s| (s.norm_a.max(s.norm_b), s.ratio)));
    let c = samples
        .iter()
        .filter(|s| s.ratio.is_finite())
        .map(|s| s.ratio / (1.0 + s.norm_a.powf(p) + s.norm_b.powf(p)))
        .fold(0.0, f64::max);
    GrowthFit { c, p }
}

/// Envelope |f(x)| ≤ C(1 + |x|^p) from (|x|, |f(x)|) samples.
pub fn fit_envelope(samples: impl Iterator<Item = (f64, f64)> + Clone) -> GrowthFit {
    let p = ladder_slope(samples.clone());
    let c = samples.map(|(r, v)| v / (1.0 + r.powf(p))).filter(|v| v.is_finite()).fold(0.0, f64::max);
    GrowthFit { c, p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_increments_have_unit_exponent() {
        let mut s = Vec::new();
        for i in 0..400 {
            let a = -10.0 + 20.0 * (i as f64 * 0.618_034).fract();
            let b = -10.0 + 20.0 * (i as f64 * 0.414_214 + 0.3).fract();
            s.push(IncrementSample { norm_a: a.abs(), norm_b: b.abs(), ratio: (a + b).abs() });
        }
        let fit = fit_increment_class(&s);
        assert!((fit.p - 1.0).abs() < 0.2, "{fit:?}");
        assert!((fit.c - 1.0).abs() < 0.2, "{fit:?}");
    }

    #[test]
    fn constant_function_has_zero_constant() {
        let s = vec![IncrementSample { norm_a: 2.0, norm_b: 3.0, ratio: 0.0 }; 10];
        assert_eq!(fit_increment_class(&s), GrowthFit { c: 0.0, p: 0.0 });
    }
}
