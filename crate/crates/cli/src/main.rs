//! `oaccomp`: design, verify and simulate over-the-air computation
//! constellations from a JSON run configuration.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! design or diverged solver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oaccomp::{AggregationKind, Error};

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible | Error::SolverDiverged => CliError::Infeasible(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Infeasible(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "oaccomp",
    version,
    about = "Constellation design for over-the-air computation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Accept instances above K=6 or q=8.
    #[arg(long)]
    allow_blowup: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            out: self.out.clone(),
            allow_blowup: self.allow_blowup,
        }
    }
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Constellation file: `re,im` rows, or a `result.json`.
    constellation: PathBuf,
    /// Run configuration naming the function, K and q.
    #[arg(long, conflicts_with_all = ["function", "k", "q"])]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, requires_all = ["k", "q"])]
    function: Option<AggregationKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    allow_blowup: bool,
}

fn parse_kind(s: &str) -> Result<AggregationKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown function `{s}`"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design a modulation vector; writes constellation.csv and result.json.
    Design(Common),
    /// Check a constellation for overlaps; writes verify.json with --out.
    Verify(VerifyArgs),
    /// Design, then estimate MSE and MAE at the configured noise.
    Simulate(Common),
    /// Design, then sweep the noise scale; writes sweep.dat and sweep.json.
    Sweep(Common),
    /// Sweep several designs and rank them per grid point.
    Compare(Common),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("OACCOMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "OACCOMP_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Design(c) => commands::design(&c.config, &c.overrides()),
        Command::Simulate(c) => commands::simulate(&c.config, &c.overrides()),
        Command::Sweep(c) => commands::sweep(&c.config, &c.overrides(), false),
        Command::Compare(c) => commands::sweep(&c.config, &c.overrides(), true),
        Command::Verify(v) => {
            let overrides = Overrides {
                seed: v.seed,
                trials: v.trials,
                out: v.out.clone(),
                allow_blowup: v.allow_blowup,
            };
            let target = match (v.config, v.function) {
                (Some(path), _) => commands::VerifyTarget::Config(path),
                (None, Some(kind)) => commands::VerifyTarget::Inline {
                    kind,
                    k: v.k.expect("required by clap"),
                    q: v.q.expect("required by clap"),
                },
                (None, None) => {
                    return Err(CliError::Config(
                        "verify needs --config or --function/--k/--q".into(),
                    ))
                }
            };
            commands::verify(&v.constellation, target, &overrides)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
