#![allow(dead_code)]

//! Reference computations shared by the integration tests. Nothing here calls
//! into the library's quadrature or simulation code.

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// ∫_lo^hi φ(r) dr for φ possibly singular like r^{-s} at 0: integrate in
/// log-radius. A zero lower limit is replaced by 1e-14.
pub fn radial_integral(phi: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let lo = if lo <= 0.0 { 1e-14 } else { lo };
    let g = |s: f64| {
        let r = s.exp();
        phi(r) * r
    };
    simpson(&g, lo.ln(), hi.ln(), tol)
}

/// Density of the 1D tempered-stable measure used throughout the tests.
pub fn ts_density(c: f64, alpha: f64, cutoff: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| if r > 0.0 && r <= cutoff { c * (-r).exp() * r.powf(-1.0 - alpha) } else { 0.0 }
}

/// ∫_{|e| ≥ lo} φ(|e|) λ(de) for a symmetric 1D density, splitting at 1.
pub fn symmetric_line_integral(phi: &dyn Fn(f64) -> f64, density: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let f = |r: f64| phi(r) * density(r);
    let mut total = 0.0;
    let edges = [lo, 1.0f64.max(lo), hi];
    for w in edges.windows(2) {
        if w[1] > w[0] {
            total += radial_integral(&f, w[0], w[1], 1e-15);
        }
    }
    2.0 * total
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// E[sup_{r≤s}|B_r|²] / s for standard Brownian motion, from the series for
/// the law of sup|B| on [0,1]: P(sup|B| < a) = (4/π) Σ (-1)^n/(2n+1) exp(-(2n+1)²π²/(8a²)).
pub fn brownian_abs_sup_second_moment() -> f64 {
    use std::f64::consts::PI;
    let survival = |a: f64| {
        if a <= 0.0 {
            return 1.0;
        }
        let mut cdf = 0.0;
        for n in 0..200 {
            let k = (2 * n + 1) as f64;
            let term = (if n % 2 == 0 { 1.0 } else { -1.0 }) / k * (-(k * k) * PI * PI / (8.0 * a * a)).exp();
            cdf += term;
        }
        1.0 - 4.0 / PI * cdf
    };
    // E[S²] = ∫ 2a P(S > a) da
    simpson(&|a| 2.0 * a * survival(a), 0.0, 12.0, 1e-12)
}
