//! `jumpbsde run <config>` and `jumpbsde describe <name>`.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 config error or unknown
//! name, 3 numeric or i/o failure.

mod config;
mod describe;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown name `{0}`; models: {models}; measures: {measures}", models = jumpbsde::zoo::ZooModel::NAMES.join(", "), measures = describe::MEASURE_NAMES.join(", "))]
    UnknownName(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] jumpbsde::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::UnknownName(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "jumpbsde", version, about = "Coupled BSDEs with jumps: solvers and numerical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a TOML config.
    Run { config: PathBuf },
    /// Print a registered model or measure.
    Describe { name: String },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("`--threads`: {e}")))?;
    }
    match cli.command {
        Command::Describe { name } => {
            print!("{}", describe::describe(&name)?);
            Ok(true)
        }
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let out = match (cli.out, &cfg.out) {
                (Some(o), _) => o,
                (None, Some(o)) if o.is_absolute() => o.clone(),
                (None, Some(o)) => base.join(o),
                (None, None) => base.join("out"),
            };
            cfg.out = Some(out.clone());
            pipeline::Runner::new(cfg, out)?.run()
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
