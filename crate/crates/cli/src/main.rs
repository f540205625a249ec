//! `fuelshock`: batch driver for panel estimation, elasticity tables and
//! fuel-price shock scenarios.

mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fuelshock_core::Error as CoreError;

use inputs::PARAMS_ENV;

/// Exit statuses. Usage errors from argument parsing also exit with 2.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const RANK_DEFICIENT: u8 = 3;
    pub const NON_CONVERGENCE: u8 = 4;
    pub const REPRODUCE_FAILED: u8 = 5;
}

#[derive(Parser, Debug)]
#[command(name = "fuelshock", version, about = "Fuel-price shocks to transport emissions and acute mortality")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a demand system to a province-year fuel panel.
    Estimate(EstimateArgs),
    /// Demand and emission elasticity tables from a fit document.
    Elasticities(ElasticityArgs),
    /// Run or reproduce shock scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Load and check input files without computing anything.
    Validate(ValidateArgs),
}

#[derive(Subcommand, Debug)]
enum ScenarioCommand {
    /// Run scenarios through the impact chain and write a report.
    Run(RunArgs),
    /// Run the shipped scenarios and compare against the published cells.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Aids,
    DoubleLog,
}

#[derive(Args, Debug)]
pub struct ParamsArg {
    /// Parameter directory, or a parameters.toml inside one. Defaults to the
    /// builtin tables.
    #[arg(long, env = PARAMS_ENV)]
    pub params: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Fit document (aids) or coefficient table (double-log).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long, value_enum, default_value = "aids")]
    pub model: Model,
    /// Price index for real expenditure: translog or stone.
    #[arg(long, default_value = "translog")]
    pub index: String,
    /// Convergence threshold on the largest parameter change.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..=100_000))]
    pub max_iter: u32,
    /// Good whose share equation is dropped. Defaults to the last.
    #[arg(long = "drop")]
    pub dropped_equation: Option<String>,
    /// Pool classes that share an identical price series into one good.
    #[arg(long)]
    pub group_prices: bool,
    /// Output format for the double-log table.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ElasticityArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// `means` or a JSON file with `shares` and `log_prices`.
    #[arg(long, default_value = "means")]
    pub at: String,
    /// Also write emission elasticities, which need fleet parameters.
    #[arg(long)]
    pub emissions: bool,
    #[command(flatten)]
    pub params: ParamsArg,
    /// Activity basis for emission weights: km or litres.
    #[arg(long, default_value = "km")]
    pub basis: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario file. Defaults to scenarios.toml in the parameter directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamsArg,
    /// Emission price elasticity table. Defaults to the one in the
    /// parameter directory.
    #[arg(long)]
    pub elasticities: Option<PathBuf>,
    /// mean or weighted-sum.
    #[arg(long, default_value = "mean")]
    pub aggregation: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Long-format plot data file.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    /// Restrict to these scenario ids (repeatable).
    #[arg(long = "scenario")]
    pub scenarios: Vec<String>,
    /// Comparison grid (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the computed report (CSV).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub params: ParamsArg,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub elasticities: Option<PathBuf>,
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

/// Some published cells were not reproduced.
#[derive(Debug)]
pub struct ReproduceFailed {
    pub failed: usize,
    pub total: usize,
}

impl std::fmt::Display for ReproduceFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} of {} published cells outside tolerance", self.failed, self.total)
    }
}

impl std::error::Error for ReproduceFailed {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ReproduceFailed>().is_some() {
        return exit::REPRODUCE_FAILED;
    }
    for cause in e.chain() {
        if let Some(ce) = cause.downcast_ref::<CoreError>() {
            return match ce {
                CoreError::RankDeficient { .. } => exit::RANK_DEFICIENT,
                CoreError::NonConvergence { .. } => exit::NON_CONVERGENCE,
                CoreError::MissingCovariance | CoreError::NonFinite(_) => exit::OTHER,
                _ => exit::INPUT,
            };
        }
    }
    exit::OTHER
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Elasticities(a) => commands::elasticities(a),
        Command::Scenario(ScenarioCommand::Run(a)) => commands::scenario_run(a),
        Command::Scenario(ScenarioCommand::Reproduce(a)) => commands::scenario_reproduce(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
