//! `turnpike`: analysis, solves and horizon sweeps for LQ turnpike problems.

mod commands;
mod config;
mod svg;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use commands::Preset;
use config::Overrides;

#[derive(Parser)]
#[command(name = "turnpike", version, about = "Turnpike analysis for linear-quadratic optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Time horizon T (overrides the config).
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    /// Number of grid steps (overrides the config).
    #[arg(long)]
    steps: Option<usize>,
    /// Seed for random-system generators (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`analyze` prints to stdout unless given).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            horizon: self.horizon,
            steps: self.steps,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Subspace structure, Riccati solution and predicates.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal trajectory on [0, T]: trajectory.csv and summary.json.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Turnpike verdict across horizons, with deviation curves and a plot.
    Sweep {
        config: PathBuf,
        /// Comma-separated horizons (at least three, ascending).
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Full artifact bundle for a reference configuration.
    Reproduce {
        #[arg(value_enum)]
        name: Preset,
        #[command(flatten)]
        common: Common,
    },
}

fn init_logging() {
    let level = match std::env::var("TURNPIKE_LOG").ok().as_deref().map(str::trim) {
        None | Some("") | Some("error") => LevelFilter::Error,
        Some("info") => LevelFilter::Info,
        Some("debug") => LevelFilter::Debug,
        Some(other) => {
            eprintln!("TURNPIKE_LOG={other} not recognised (error, info, debug); using error");
            LevelFilter::Error
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn print(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { config, common } => {
            let exp = config::load(&config, &common.overrides())?;
            let value = commands::analyze(&exp)?;
            match &common.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    commands::write_json(&dir.join("analysis.json"), &value)?;
                }
                None => print(&value)?,
            }
        }
        Command::Solve { config, common } => {
            let exp = config::load(&config, &common.overrides())?;
            let out = common.out.unwrap_or_else(commands::default_out);
            let (_, summary) = commands::solve_to(&exp, &out)?;
            print(&summary)?;
        }
        Command::Sweep { config, horizons, common } => {
            let mut exp = config::load(&config, &common.overrides())?;
            if let Some(h) = horizons {
                exp.horizons = h;
            }
            let out = common.out.unwrap_or_else(commands::default_out);
            let value = commands::sweep_to(&exp, &out)?;
            print(&serde_json::json!({
                "schema": commands::SCHEMA,
                "command": "sweep",
                "verdict": value["verdict"],
                "predicate": value["predicate"],
                "agrees": value["agrees"],
                "midpoint_ratios": value["report"]["midpoint_ratios"],
            }))?;
        }
        Command::Reproduce { name, common } => {
            let out = common.out.clone().unwrap_or_else(|| commands::default_out().join(name.name()));
            let verdict = commands::reproduce(name, &common.overrides(), &out)?;
            print(&verdict)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
