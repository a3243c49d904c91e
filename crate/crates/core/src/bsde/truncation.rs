//! Convergence of the solution as the truncation level k grows.

use serde::{Deserialize, Serialize};

use super::{solve_lsmc, BsdeSolution, QMeasure, SolverSettings};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sde::{simulate, PathBundle, TimeGrid};
use crate::stats::{fit_line, mean_and_se, spearman};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub k: u32,
    /// ∫_{|e|<1/k} (1∧|e|²) λ(de).
    pub tail_mass: f64,
    pub e_x: f64,
    pub e_x_se: f64,
    pub e_y: f64,
    pub e_y_se: f64,
    pub e_u: f64,
    pub e_u_se: f64,
    pub e_z: f64,
    pub e_z_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub reference_k: u32,
    pub n_paths: usize,
    pub seed: u64,
    pub rows: Vec<TruncationRow>,
    /// Smallest C with e_X(k) ≤ C·tail_mass(k) for all rows.
    pub constant: f64,
    /// Least-squares slope of log e_X against log tail_mass.
    pub slope: f64,
    pub spearman_x: f64,
    pub spearman_y: f64,
    pub monotone_x: bool,
    pub monotone_y: bool,
}

/// Errors of level k against a finer reference level 4·max(ks). Every level
/// reuses the seed, so Brownian increments and all jumps above the coarser
/// threshold coincide path by path.
pub fn truncation_study(
    spec: &ModelSpec,
    x: &[f64],
    grid: &TimeGrid,
    ks: &[u32],
    n_paths: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<ConvergenceTable> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) || ks[0] == 0 {
        return Err(Error::InvalidInput(format!("truncation levels must be positive and increasing: {ks:?}")));
    }
    let settings = SolverSettings { q_measure: QMeasure::Truncated, ..settings.clone() };
    let reference_k = 4 * ks[ks.len() - 1];
    let level = |k: u32| -> Result<(PathBundle, BsdeSolution)> {
        let tm = spec.measure.truncate(k)?;
        let bundle = simulate(spec, &tm, x, grid, n_paths, seed)?;
        let sol = solve_lsmc(spec, &bundle, &settings)?;
        Ok((bundle, sol))
    };
    let (ref_bundle, ref_sol) = level(reference_k)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let (bundle, sol) = level(k)?;
        rows.push(compare(k, spec.measure.small_jump_mass(1.0 / k as f64)?, &bundle, &sol, &ref_bundle, &ref_sol));
    }

    let constant = rows.iter().filter(|r| r.tail_mass > 0.0).map(|r| r.e_x / r.tail_mass).fold(0.0, f64::max);
    let logs: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.tail_mass > 0.0 && r.e_x > 0.0).map(|r| (r.tail_mass.ln(), r.e_x.ln())).collect();
    let slope = if logs.len() >= 2 {
        let (lx, ly): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        fit_line(&lx, &ly).1
    } else {
        f64::NAN
    };
    let tails: Vec<f64> = rows.iter().map(|r| r.tail_mass).collect();
    let ex: Vec<f64> = rows.iter().map(|r| r.e_x).collect();
    let ey: Vec<f64> = rows.iter().map(|r| r.e_y).collect();
    let monotone = |v: &dyn Fn(&TruncationRow) -> (f64, f64)| {
        rows.windows(2).all(|w| {
            let (a, sa) = v(&w[0]);
            let (b, sb) = v(&w[1]);
            b <= a + 2.0 * (sa * sa + sb * sb).sqrt()
        })
    };
    Ok(ConvergenceTable {
        reference_k,
        n_paths,
        seed,
        constant,
        slope,
        spearman_x: if rows.len() >= 2 { spearman(&ex, &tails) } else { f64::NAN },
        spearman_y: if rows.len() >= 2 { spearman(&ey, &tails) } else { f64::NAN },
        monotone_x: monotone(&|r| (r.e_x, r.e_x_se)),
        monotone_y: monotone(&|r| (r.e_y, r.e_y_se)),
        rows,
    })
}

fn compare(k: u32, tail_mass: f64, bx: &PathBundle, sx: &BsdeSolution, br: &PathBundle, sr: &BsdeSolution) -> TruncationRow {
    let (n, kd, m, d) = (bx.n_paths, bx.state_dim, sx.components, sx.brownian_dim);
    let dt = bx.grid.dt();
    let mut ex = vec![0.0f64; n];
    let mut ey = vec![0.0f64; n];
    let mut eu = vec![0.0; n];
    let mut ez = vec![0.0; n];
    for p in 0..n {
        for j in 0..bx.n_nodes() {
            let dx: f64 = (0..kd).map(|c| (bx.state(j, p)[c] - br.state(j, p)[c]).powi(2)).sum();
            let dl: f64 = (0..kd).map(|c| (bx.left_limit(j, p)[c] - br.left_limit(j, p)[c]).powi(2)).sum();
            ex[p] = ex[p].max(dx).max(dl);
            let dy: f64 = (0..m).map(|i| (sx.y_at(j, p, i) - sr.y_at(j, p, i)).powi(2)).sum();
            ey[p] = ey[p].max(dy);
        }
        for j in 0..bx.grid.n_steps {
            eu[p] += dt * (0..m).map(|i| (sx.q_at(j, p, i) - sr.q_at(j, p, i)).powi(2)).sum::<f64>();
            let o = p * m * d;
            ez[p] += dt * (0..m * d).map(|r| (sx.z[j][o + r] - sr.z[j][o + r]).powi(2)).sum::<f64>();
        }
    }
    let (e_x, e_x_se) = mean_and_se(&ex);
    let (e_y, e_y_se) = mean_and_se(&ey);
    let (e_u, e_u_se) = mean_and_se(&eu);
    let (e_z, e_z_se) = mean_and_se(&ez);
    TruncationRow { k, tail_mass, e_x, e_x_se, e_y, e_y_se, e_u, e_u_se, e_z, e_z_se }
}
