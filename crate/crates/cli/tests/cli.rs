use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jumpbsde"))
}

fn run(config: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).args(["--threads", "1"]).args(extra).output().unwrap()
}

const SMALL: &str = r#"
seed = 11

[model]
name = "linear_additive"

[measure]
kind = "tempered_stable"
c = 1.0
alpha = 0.5

[grid]
x = [0.5]
x_ladder = [0.0, 1.0, 2.0]
n_steps = 8
n_paths = 1500

[truncation]
k = 8
ks = [2, 4, 8]

[checks.probe]
xs = [0.0, 1.0]
fd = { half_width = 4.0, nx = 81, nt = 80 }
fd_tolerance = 1e-2

[checks.truncation]
[checks.moments]
second_x = [1.5]
[checks.up_moment]
p = [2]
[checks.u_class]
n_pairs = 500
[checks.picard]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("tables"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("alpha = 0.5", "alpha_ = 0.5"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha_"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &format!("{SMALL}\nbogus = 1\n"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn invalid_values_name_their_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("ks = [2, 4, 8]", "ks = [4, 2]"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("truncation.ks"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &SMALL.replace("alpha = 0.5", "alpha = 2.5"));
    assert_eq!(run(&cfg, &[]).status.code(), Some(2));

    let cfg = write_config(dir.path(), &SMALL.replace("linear_additive", "norm_coupling_demo").replace("[checks.picard]", "[checks.uniqueness]"));
    let o = run(&cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checks.uniqueness"), "{}", stderr(&o));
}

#[test]
fn repeated_runs_give_identical_csvs_and_a_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run(&cfg, &["--out", a.to_str().unwrap()]);
    assert_eq!(oa.status.code(), Some(0), "{}\n{}", String::from_utf8_lossy(&oa.stdout), stderr(&oa));
    let ob = run(&cfg, &["--out", b.to_str().unwrap()]);
    assert_eq!(ob.status.code(), Some(0));
    let ta = csvs(&a);
    assert!(ta.len() >= 8, "{:?}", ta.iter().map(|t| &t.0).collect::<Vec<_>>());
    assert_eq!(ta, csvs(&b));

    // third run reuses the cached paths and still reproduces the tables
    let oc = run(&cfg, &["--out", a.to_str().unwrap()]);
    assert_eq!(oc.status.code(), Some(0));
    assert_eq!(ta, csvs(&a));

    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "pass");
    assert_eq!(m["cache"]["paths"]["hit"], true);
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["config"]["measure"]["alpha"], 0.5);
    assert_eq!(m["seeds"]["paths"], 11);
    assert!(m["stages"].as_array().unwrap().iter().all(|s| s["wall_seconds"].as_f64().unwrap() >= 0.0));
    assert_eq!(m["csv_columns"]["tables/solve.estimates.csv"][1], "y");
    assert!(m["artifacts"]["artifacts/field.jbsd"].as_str().unwrap().len() == 64);
    assert!(!m["version"].as_str().unwrap().is_empty());

    let field = jumpbsde::io::read_field(&a.join("artifacts/field.jbsd")).unwrap();
    assert_eq!(field.times[0], 0.0);
    let paths = jumpbsde::io::read_bundle(&a.join("artifacts/paths.jbsd")).unwrap();
    assert_eq!((paths.n_paths, paths.seed, paths.truncation_k), (1500, 11, 8));

    let stdout = String::from_utf8_lossy(&oa.stdout);
    for line in stdout.lines() {
        assert!(line.contains("seed ") && line.contains("n_"), "{line}");
    }
}

#[test]
fn echoed_config_reruns_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    assert_eq!(run(&cfg, &["--out", a.to_str().unwrap(), "--seed", "5"]).status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let b = dir.path().join("b");
    let text = m["config_toml"].as_str().unwrap().to_string();
    let out_line = text.lines().find(|l| l.starts_with("out = ")).unwrap().to_string();
    let text = text.replace(&out_line, &format!("out = {:?}", b.to_str().unwrap()));
    let cfg2 = dir.path().join("echo.toml");
    std::fs::write(&cfg2, text).unwrap();
    assert_eq!(run(&cfg2, &[]).status.code(), Some(0));
    assert_eq!(csvs(&a), csvs(&b));
}

#[test]
fn seed_flag_changes_the_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.split("[checks.probe]").next().unwrap();
    let cfg = write_config(dir.path(), text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&cfg, &["--out", a.to_str().unwrap(), "--seed", "1"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &["--out", b.to_str().unwrap(), "--seed", "2"]).status.code(), Some(0));
    assert_ne!(csvs(&a), csvs(&b));
}

#[test]
fn failed_checks_exit_one_and_numeric_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let base = SMALL.split("[checks.probe]").next().unwrap();
    let cfg = write_config(dir.path(), &format!("{base}[checks.picard]\nmax_ratio = -1.0\n"));
    let o = run(&cfg, &["--out", dir.path().join("a").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let cfg = write_config(dir.path(), &format!("{base}[checks.probe]\nxs = [0.0]\nfd = {{ half_width = 4.0, nx = 81, nt = 1 }}\n"));
    let out = dir.path().join("b");
    let o = run(&cfg, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("CFL"), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "numeric_failure");
    let stages = m["stages"].as_array().unwrap();
    assert_eq!(stages.last().unwrap()["status"], "failed");
    assert!(stages.iter().any(|s| s["name"] == "solve" && s["status"] == "ok"));
}

#[test]
fn describe_models_and_measures() {
    let o = bin().args(["describe", "coupled_sine"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("non-monotone q-dependence"), "{text}");
    assert!(text.contains("system 2"));
    assert!(text.contains("assumption report"));

    let o = bin().args(["describe", "zero"]).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("total mass: 0\n"));

    let o = bin().args(["describe", "tempered_stable"]).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("infinite"));

    let o = bin().args(["describe", "nosuch"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown name `nosuch`"));
}
