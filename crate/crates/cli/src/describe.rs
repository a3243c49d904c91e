use std::fmt::Write;

use jumpbsde::levy::Decay;
use jumpbsde::model::{check_assumptions, DomainBox};
use jumpbsde::zoo::{MeasureChoice, ZooModel};

use crate::CliError;

pub const MEASURE_NAMES: [&str; 3] = ["tempered_stable", "finite_uniform", "zero"];

fn default_measure(name: &str) -> Option<MeasureChoice> {
    Some(match name {
        "tempered_stable" => MeasureChoice::TemperedStable { c: 1.0, alpha: 0.5, cutoff: jumpbsde::levy::DEFAULT_SUPPORT_RADIUS },
        "finite_uniform" => MeasureChoice::FiniteUniform { mass: 2.0, radius: 1.0, inner: 0.0 },
        "zero" => MeasureChoice::Zero,
        _ => return None,
    })
}

fn model_notes(name: &str) -> &'static str {
    match name {
        "linear_additive" => "closed form u(t, x) = x + (b + h)(T - t); anchors the Monte Carlo solver and the finite-difference oracle",
        "coupled_sine" => {
            "two components coupled through each other's values and the jump channel q; \
             non-monotone q-dependence (h1 has sin 2q) and a sign-changing jump weight, so no monotonicity in q is assumed; \
             exercised by the oracle agreement, uniqueness and Picard checks"
        }
        "norm_coupling_demo" => "jump channel enters through its L2(lambda) norm; reduces to the integral coupling when that channel vanishes",
        "quadratic_payoff" => "closed form with curvature; used for finite-difference refinement rates",
        _ => "",
    }
}

fn params_toml<T: serde::Serialize>(v: &T) -> String {
    toml::to_string(v).unwrap_or_default()
}

pub fn describe(name: &str) -> Result<String, CliError> {
    let mut out = String::new();
    if let Some(model) = ZooModel::by_name(name) {
        let measure = default_measure("tempered_stable").unwrap();
        let spec = model.build(measure.build()?)?;
        let d = spec.dims;
        writeln!(out, "model {name}").unwrap();
        writeln!(out, "dimensions: state {}, brownian {}, system {}, mark {}", d.state, d.brownian, d.system, d.mark).unwrap();
        writeln!(out, "coupling: {:?}", spec.coupling).unwrap();
        writeln!(out, "closed form: {}", if spec.exact.is_some() { "yes" } else { "no" }).unwrap();
        writeln!(out, "notes: {}", model_notes(name)).unwrap();
        writeln!(out, "parameters (defaults):").unwrap();
        for line in params_toml(&model).lines() {
            writeln!(out, "  {line}").unwrap();
        }
        let bx = DomainBox::centered(&spec, 3.0);
        let report = check_assumptions(&spec, &bx, 2000, 0)?;
        writeln!(out, "assumption report (tempered_stable c = 1, alpha = 0.5; |x| <= 3; 2000 samples, seed 0):").unwrap();
        for c in &report.checks {
            let exp = c.exponent.map(|p| format!(" p = {p:.3}")).unwrap_or_default();
            writeln!(out, "  {:<32} C = {:.4e}{exp} {}", c.name, c.constant, if c.passed { "ok" } else { "FAIL" }).unwrap();
        }
        for l in &report.limitations {
            writeln!(out, "  limitation: {l}").unwrap();
        }
        return Ok(out);
    }
    if let Some(choice) = default_measure(name) {
        let m = choice.build()?;
        writeln!(out, "measure {name}").unwrap();
        writeln!(out, "parameters (defaults):").unwrap();
        for line in params_toml(&choice).lines().filter(|l| !l.starts_with("kind")) {
            writeln!(out, "  {line}").unwrap();
        }
        let mass = match choice {
            MeasureChoice::Zero => "0".to_string(),
            MeasureChoice::TemperedStable { .. } => "infinite (infinite activity)".to_string(),
            MeasureChoice::FiniteUniform { mass, .. } => format!("{mass}"),
        };
        writeln!(out, "total mass: {mass}").unwrap();
        let second = m.integrate(&|e| e.iter().map(|a| a * a).sum::<f64>().min(1.0), Decay::Quadratic)?;
        writeln!(out, "integral of min(1, |e|^2): {second:.6}").unwrap();
        for k in [2u32, 8, 32] {
            writeln!(out, "mass of lambda_{k}: {:.6}", m.truncate(k)?.total_mass()).unwrap();
        }
        return Ok(out);
    }
    Err(CliError::UnknownName(name.to_string()))
}
