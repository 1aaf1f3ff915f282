//! `skewlevy` command-line front end.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skewlevy::experiments::ExperimentOptions;

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "SKEWLEVY_OUT";
const DEFAULT_OUT_ROOT: &str = "skewlevy-out";

#[derive(Parser)]
#[command(
    name = "skewlevy",
    version,
    about = "Simulate, decompose and verify group-invariant Markov processes"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $SKEWLEVY_OUT/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of paths.
    Simulate {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        size: Option<usize>,
        /// Horizon T.
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Split simulated paths into radial and angular parts.
    Decompose {
        /// Directory written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        /// Expected scenario; refused if it differs from the manifest.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Estimate the Levy triple of decomposed angular paths.
    Estimate {
        /// Directory written by `decompose`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_grid: Option<usize>,
        #[arg(long)]
        jump_threshold: Option<f64>,
    },
    /// Run a registered acceptance experiment.
    Verify {
        /// Experiment name or id.
        name: Option<String>,
        /// Print the registry and exit.
        #[arg(long)]
        list: bool,
    },
}

fn out_dir(common: &Common, leaf: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV)
            .map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
        root.join(leaf)
    })
}

fn run_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paths {
        cfg.n_paths = n;
    }
    if let Some(dt) = common.dt {
        cfg.dt = dt;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.common;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            scenario,
            size,
            t_end,
            format,
        } => {
            let mut cfg = run_config(&common)?;
            if let Some(s) = scenario {
                if s != cfg.scenario {
                    cfg.x0.clear();
                }
                cfg.scenario = s;
            }
            if let Some(n) = size {
                if n != cfg.size {
                    cfg.x0.clear();
                }
                cfg.size = n;
            }
            if let Some(t) = t_end {
                cfg.t_end = t;
            }
            if let Some(f) = format {
                cfg.format = f;
            }
            commands::simulate(&cfg.resolve()?, &out_dir(&common, "simulate"))
        }
        Command::Decompose { input, scenario } => {
            commands::decompose(&input, scenario.as_deref(), &out_dir(&common, "decompose"))
        }
        Command::Estimate {
            input,
            n_grid,
            jump_threshold,
        } => {
            let mut cfg = run_config(&common)?;
            if let Some(n) = n_grid {
                cfg.estimator.n_grid = n;
            }
            if jump_threshold.is_some() {
                cfg.estimator.jump_threshold = jump_threshold;
            }
            commands::estimate(&input, &cfg.resolve()?, &out_dir(&common, "estimate"))
        }
        Command::Verify { name, list } => {
            if list {
                commands::list();
                return Ok(());
            }
            let Some(name) = name else {
                commands::list();
                return Err(CliError::Usage(
                    "verify needs an experiment name or --list".into(),
                ));
            };
            let opts = ExperimentOptions {
                seed: common.seed.unwrap_or(skewlevy::experiments::DEFAULT_SEED),
                paths: common.paths,
                dt: common.dt,
            };
            let report = commands::verify(&name, opts, &out_dir(&common, "verify"))?;
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<&str> = report.failed_checks().map(|c| c.name.as_str()).collect();
                Err(CliError::CheckFailed(format!(
                    "{} failed: {}",
                    report.name,
                    failed.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
