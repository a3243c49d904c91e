//! Small statistics helpers and thread-count independent reductions.

use rayon::prelude::*;

/// Items per reduction chunk. Chunk boundaries are fixed, so floating-point
/// sums come out identical for any number of worker threads.
pub const CHUNK: usize = 2048;

/// Σ_i f(i) for vector-valued contributions: `f(i, acc)` adds item i into `acc`.
pub fn chunked_sum<F>(n: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    chunked_sum_with(n, width, || (), |i, _, acc| f(i, acc))
}

/// As [`chunked_sum`], with a scratch value created once per chunk.
pub fn chunked_sum_with<S, M, F>(n: usize, width: usize, make: M, f: F) -> Vec<f64>
where
    M: Fn() -> S + Sync,
    F: Fn(usize, &mut S, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            let mut scratch = make();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut scratch, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    chunked_sum(v.len(), 1, |i, a| a[0] += v[i])[0] / v.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n < 2 {
        return (mean(v), f64::INFINITY);
    }
    let m = mean(v);
    let ss = chunked_sum(n, 1, |i, a| a[0] += (v[i] - m).powi(2))[0];
    (m, (ss / (n as f64 - 1.0) / n as f64).sqrt())
}

/// Linear-interpolated empirical quantile, q in [0, 1].
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].partial_cmp(&v[*b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for t in &idx[i..=j] {
            r[*t] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return f64::NAN;
    }
    cov / (va * vb).sqrt()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&ranks(a), &ranks(b))
}

/// Least-squares slope of y ≈ c·x through the origin and the relative L2 residual.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let c = if sxx > 0.0 { x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx } else { 0.0 };
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = x.iter().zip(y).map(|(a, b)| (b - c * a).powi(2)).sum::<f64>().sqrt();
    (c, if ny > 0.0 { res / ny } else { 0.0 })
}

/// Ordinary least-squares line y ≈ a + b·x; returns (a, b).
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_of_monotone_sequences() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn chunked_sum_is_thread_count_independent() {
        let v: Vec<f64> = (0..50_000).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let a = chunked_sum(v.len(), 1, |i, acc| acc[0] += v[i]);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| chunked_sum(v.len(), 1, |i, acc| acc[0] += v[i]));
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-12);
    }
}
