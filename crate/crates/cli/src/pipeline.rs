//! Stages of `run`: simulate (cached), solve, checks. Stages run in order;
//! parallelism lives inside the library calls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jumpbsde::bsde::WindowLength;
use jumpbsde::io;
use jumpbsde::sde::{moment_check, simulate};
use jumpbsde::verify::{
    feynman_kac_probe, jump_representation_check, moment_report, picard_contraction, truncation_report, u_class_check,
    up_moment_check, uniqueness_fixed_point, CheckReport, McSettings, ProbeOptions, Table,
};
use jumpbsde::{solve_lsmc, truncation_study, BsdeSolution, FnField, ModelSpec, PathBundle, QEstimator, SolverSettings, TimeGrid};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct StageRecord {
    name: String,
    wall_seconds: f64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct CheckRecord {
    label: String,
    passed: bool,
    summary: String,
    report: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    library_version: &'static str,
    artifact_format_version: u16,
    threads: usize,
    config: ExperimentConfig,
    /// The same config as TOML; running it reproduces the experiment.
    config_toml: String,
    seeds: BTreeMap<String, u64>,
    stages: Vec<StageRecord>,
    csv_columns: BTreeMap<String, Vec<String>>,
    artifacts: BTreeMap<String, String>,
    cache: BTreeMap<String, Value>,
    checks: Vec<CheckRecord>,
    status: &'static str,
}

pub struct Runner {
    cfg: ExperimentConfig,
    spec: ModelSpec,
    out: PathBuf,
    manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> Result<Self, CliError> {
        let spec = cfg.model.build(cfg.measure.build()?)?;
        let manifest = Manifest {
            tool: "jumpbsde",
            version: env!("CARGO_PKG_VERSION"),
            library_version: jumpbsde::VERSION,
            artifact_format_version: io::VERSION,
            threads: rayon::current_num_threads(),
            config: cfg.clone(),
            config_toml: toml::to_string(&cfg).map_err(|e| CliError::Config(format!("config echo: {e}")))?,
            seeds: BTreeMap::new(),
            stages: Vec::new(),
            csv_columns: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            cache: BTreeMap::new(),
            checks: Vec::new(),
            status: "running",
        };
        for dir in ["tables", "reports", "artifacts", "cache"] {
            let d = out.join(dir);
            std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
        }
        Ok(Self { cfg, spec, out, manifest })
    }

    fn seed(&mut self, name: &str, offset: u64) -> u64 {
        let s = self.cfg.seed.wrapping_add(offset);
        self.manifest.seeds.insert(name.into(), s);
        s
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(rel);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.manifest.artifacts.insert(rel.into(), sha256_hex(bytes));
        Ok(())
    }

    fn write_table(&mut self, label: &str, table: &Table) -> Result<(), CliError> {
        let rel = format!("tables/{label}.{}.csv", table.name);
        self.manifest.csv_columns.insert(rel.clone(), table.columns.clone());
        self.write(&rel, table.to_csv().as_bytes())
    }

    fn record(&mut self, label: &str, report: CheckReport) -> Result<(), CliError> {
        for t in &report.tables {
            self.write_table(label, t)?;
        }
        let rel = format!("reports/{label}.json");
        self.write(&rel, report.to_json().as_bytes())?;
        let summary = format!("{label}: {}", report.summary());
        println!("{summary}");
        self.manifest.checks.push(CheckRecord { label: label.into(), passed: report.passed, summary, report: rel });
        Ok(())
    }

    /// Times `f` and records it; a library error ends the run with the
    /// manifest of completed stages on disk.
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&Self) -> jumpbsde::Result<T>) -> Result<T, CliError> {
        let start = Instant::now();
        let res = f(self);
        let wall_seconds = start.elapsed().as_secs_f64();
        match res {
            Ok(v) => {
                self.manifest.stages.push(StageRecord { name: name.into(), wall_seconds, status: "ok", error: None });
                Ok(v)
            }
            Err(e) => {
                let msg = e.to_string();
                self.manifest.stages.push(StageRecord { name: name.into(), wall_seconds, status: "failed", error: Some(msg) });
                self.manifest.status = "numeric_failure";
                self.write_manifest()?;
                Err(CliError::Numeric(e))
            }
        }
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    fn mc(&self, seed: u64) -> McSettings {
        let g = &self.cfg.grid;
        McSettings {
            n_paths: g.n_paths,
            n_steps: g.n_steps,
            truncation_k: self.cfg.truncation.k,
            seed,
            solver: self.cfg.solver.clone(),
        }
    }

    fn grid(&self) -> jumpbsde::Result<TimeGrid> {
        TimeGrid::new(self.cfg.grid.t, self.spec.horizon, self.cfg.grid.n_steps)
    }

    /// Key of the forward paths: model, measure, grid, level and seed.
    fn bundle_key(&self, x: &[f64], seed: u64) -> String {
        let c = &self.cfg;
        let key = json!({
            "format": io::VERSION,
            "model": c.model,
            "measure": c.measure,
            "t": c.grid.t,
            "x": x,
            "n_steps": c.grid.n_steps,
            "n_paths": c.grid.n_paths,
            "k": c.truncation.k,
            "seed": seed,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    fn paths(&mut self, name: &str, x: &[f64], seed: u64) -> Result<PathBundle, CliError> {
        let key = self.bundle_key(x, seed);
        let path = self.out.join("cache").join(format!("{key}.jbsd"));
        if let Ok(b) = io::read_bundle(&path) {
            self.manifest.cache.insert(name.into(), json!({"key": key, "hit": true}));
            return Ok(b);
        }
        let bundle = self.stage(&format!("simulate:{name}"), |r| {
            let tm = r.spec.measure.truncate(r.cfg.truncation.k)?;
            simulate(&r.spec, &tm, x, &r.grid()?, r.cfg.grid.n_paths, seed)
        })?;
        io::write_bundle(&path, &bundle).map_err(|e| io_err(&path, e))?;
        self.manifest.cache.insert(name.into(), json!({"key": key, "hit": false}));
        Ok(bundle)
    }

    pub fn run(mut self) -> Result<bool, CliError> {
        let x = self.cfg.grid.x.clone();
        let seed = self.seed("paths", 0);
        let bundle = self.paths("paths", &x, seed)?;
        self.write("artifacts/paths.jbsd", &io::encode_bundle(&bundle))?;
        let sol = self.stage("solve", |r| solve_lsmc(&r.spec, &bundle, &r.cfg.solver))?;
        self.write("artifacts/field.jbsd", &io::encode_field(&sol.fields))?;
        let table = solution_table(&sol);
        self.write_table("solve", &table)?;
        for (i, e) in sol.estimates.iter().enumerate() {
            println!(
                "solve: u_{i}({}, {x:?}) = {:.6} ± {:.2e} (seed {seed}, n_paths {}, k {})",
                self.cfg.grid.t, e.value, e.std_error, bundle.n_paths, bundle.truncation_k
            );
        }
        self.checks(&bundle, &sol)?;
        let passed = self.manifest.checks.iter().all(|c| c.passed);
        self.manifest.status = if passed { "pass" } else { "check_failure" };
        self.write_manifest()?;
        Ok(passed)
    }

    fn checks(&mut self, bundle: &PathBundle, sol: &BsdeSolution) -> Result<(), CliError> {
        let checks = self.cfg.checks.clone();
        let x = self.cfg.grid.x.clone();
        if let Some(c) = checks.probe {
            let seed = self.seed("probe", 1);
            let points: Vec<(f64, Vec<f64>)> = c
                .xs
                .iter()
                .map(|v| {
                    let mut p = vec![0.0; self.spec.dims.state];
                    p[0] = *v;
                    (c.t, p)
                })
                .collect();
            let opts = ProbeOptions {
                mc: self.mc(seed),
                reference: c.reference.then(|| (self.cfg.grid.t, x.clone())),
                fd: c.fd,
                fd_tolerance: c.fd_tolerance,
            };
            let r = self.stage("check:probe", |r| feynman_kac_probe(&r.spec, &points, &opts))?;
            self.record("probe", r)?;
        }
        if let Some(c) = checks.jump_representation {
            let r = self.stage("check:jump_representation", |r| {
                let settings = SolverSettings { estimator: QEstimator::Martingale, ..r.cfg.solver.clone() };
                let m = solve_lsmc(&r.spec, bundle, &settings)?;
                jump_representation_check(&r.spec, &m, bundle, c.max_paths, c.threshold)
            })?;
            self.record("jump_representation", r)?;
        }
        if let Some(c) = checks.truncation {
            let seed = self.seed("truncation", 2);
            let r = self.stage("check:truncation", |r| {
                let t = truncation_study(
                    &r.spec,
                    &x,
                    &r.grid()?,
                    &r.cfg.truncation.ks,
                    r.cfg.grid.n_paths,
                    seed,
                    &r.cfg.solver,
                )?;
                Ok(truncation_report(&t, c.min_spearman))
            })?;
            self.record("truncation", r)?;
        }
        if let Some(c) = checks.moments {
            let second = match &c.second_x {
                Some(x2) => Some(self.paths("paths_second", x2, self.cfg.seed)?),
                None => None,
            };
            for p in &c.p {
                let r = self.stage(&format!("check:moments_p{p}"), |_| moment_check(bundle, None, *p))?;
                self.record(&format!("moments_p{p}"), moment_report(&r, bundle.seed, c.max_residual))?;
                if let Some(b2) = &second {
                    let r = self.stage(&format!("check:moments_difference_p{p}"), |_| moment_check(bundle, Some(b2), *p))?;
                    self.record(&format!("moments_difference_p{p}"), moment_report(&r, bundle.seed, c.max_residual))?;
                }
            }
        }
        if let Some(c) = checks.up_moment {
            let seed = self.seed("up_moment", 4);
            for p in &c.p {
                let mc = self.mc(seed);
                let ladder = self.cfg.grid.x_ladder.clone();
                let r = self.stage(&format!("check:up_moment_p{p}"), |r| up_moment_check(&r.spec, &ladder, *p, &mc))?;
                self.record(&format!("up_moment_p{p}"), r)?;
            }
        }
        if let Some(c) = checks.u_class {
            let seed = self.seed("u_class", 5);
            let lo: Vec<f64> = x.iter().map(|v| v - c.half_width).collect();
            let hi: Vec<f64> = x.iter().map(|v| v + c.half_width).collect();
            let r = self.stage("check:u_class", |_| Ok(u_class_check(&sol.fields, &lo, &hi, c.n_pairs, seed)))?;
            self.record("u_class", r)?;
        }
        if let Some(c) = checks.uniqueness {
            let (m, k) = (self.spec.dims.system, self.spec.dims.state);
            let zero = FnField::new(m, k, |_, _, _: &[f64]| 0.0);
            let level = FnField::new(m, k, |_, _, _: &[f64]| c.offset);
            let (ra, la) = self.stage("check:uniqueness_zero", |r| uniqueness_fixed_point(&r.spec, bundle, &r.cfg.solver, &zero, c.max_outer))?;
            let (mut rb, lb) = self.stage("check:uniqueness_offset", |r| uniqueness_fixed_point(&r.spec, bundle, &r.cfg.solver, &level, c.max_outer))?;
            let between = la.sup_distance(&lb);
            rb.statistics.insert("distance_between_limits".into(), between);
            rb.passed &= between <= rb.threshold;
            self.record("uniqueness_zero", ra)?;
            self.record("uniqueness_offset", rb)?;
        }
        if let Some(c) = checks.picard {
            let length = c.window.map_or(WindowLength::Auto, WindowLength::Fixed);
            let r = self.stage("check:picard", |r| picard_contraction(&r.spec, bundle, &r.cfg.solver, length, c.max_ratio))?;
            self.record("picard", r)?;
        }
        Ok(())
    }
}

fn solution_table(sol: &BsdeSolution) -> Table {
    let mut t = Table::new("estimates", &["component", "y", "std_error", "regression_tolerance"]);
    for (i, e) in sol.estimates.iter().enumerate() {
        t.rows.push(vec![i as f64, e.value, e.std_error, sol.regression_tolerance]);
    }
    t
}
