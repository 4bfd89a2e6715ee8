mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "baryline", version, about = "Barycenters and matching-for-teams equilibria of discrete measures")]
struct Cli {
    /// Log solver progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the coupling linear program (or a transport problem when one measure and a target are given).
    LpSolve(LpArgs),
    /// Maximize the dual over transfer potentials and recover the barycenter.
    DualSolve(DualArgs),
    /// Write the candidate quality points without solving.
    Localize(LocalizeArgs),
    /// Closed-form barycenter of the Gaussian measures in the config.
    GaussianOracle(Common),
    /// McCann interpolants of two measures, one frame per weight.
    Interpolate(InterpolateArgs),
    /// Compare the LP, dual and multi-marginal values on a small instance.
    OracleCheck(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Localize {
    None,
    /// Grid points near the weighted Minkowski sum of the supports (quadratic costs).
    Minkowski,
    /// Grid points minimizing the summed cost for some tuple of atoms.
    Candidate,
}

#[derive(Debug, Args)]
pub struct ZArgs {
    /// Quality grid resolution per axis; overrides `[z] resolution`.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum, default_value_t = Localize::None)]
    pub localize: Localize,
    /// Tuples tested by candidate localization before switching to sampling.
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
}

#[derive(Debug, Args)]
pub struct LpArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub z: ZArgs,
    /// Simplex feasibility and optimality tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Start {
    Zero,
    MeanShift,
}

#[derive(Debug, Args)]
pub struct DualArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub z: ZArgs,
    /// Stored L-BFGS curvature pairs.
    #[arg(long, default_value_t = 1000)]
    pub memory: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Relative progress below which an iteration counts toward a stall.
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    /// Slack defining the active pairs used by the reconstruction.
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = Start::Zero)]
    pub start: Start,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub z: ZArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Lp,
    Dual,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub z: ZArgs,
    /// Interpolation times in (0, 1); the second measure gets weight t.
    #[arg(long, value_delimiter = ',', required = true)]
    pub weights: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Route::Lp)]
    pub route: Route,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::LpSolve(a) => commands::lp_solve(a),
        Command::DualSolve(a) => commands::dual_solve(a),
        Command::Localize(a) => commands::localize(a),
        Command::GaussianOracle(a) => commands::gaussian_oracle(a),
        Command::Interpolate(a) => commands::interpolate(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
