//! Command-line harness for the `invaria` library: config parsing, experiment
//! orchestration and artifact emission.
//!
//! Exit codes: 0 on success, 1 for configuration or I/O errors, 2 for
//! numeric failures (divergence, non-finite values, undecided verdicts).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use invaria::analysis::AnalysisError;
use invaria::expr::ExprError;
use invaria::integrate::IntegrateError;
use invaria::invariance::InvarianceError;
use invaria::model::ModelError;

pub mod commands;
pub mod config;
pub mod manifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::DivisionByZero | ExprError::ZeroToNegativePower | ExprError::NonFinite => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite => CliError::Numeric(e.to_string()),
            ModelError::Expr(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::Model(inner) => inner.into(),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Integrate(inner) => inner.into(),
            AnalysisError::Model(inner) => inner.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<InvarianceError> for CliError {
    fn from(e: InvarianceError) -> Self {
        match e {
            InvarianceError::Integrate(inner) => inner.into(),
            InvarianceError::Model(inner) => inner.into(),
            InvarianceError::Expr(inner) => inner.into(),
            e @ (InvarianceError::Undecided { .. } | InvarianceError::Singular { .. }) => {
                CliError::Numeric(e.to_string())
            }
            e => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "invaria", version, about = "Equilibria, simulation and dynamical-compensation checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Print equilibria, eigenvalues and classifications; write equilibria.json.
    Equilibria(CommonArgs),
    /// Integrate the configured model; write trajectory.csv.
    Simulate(CommonArgs),
    /// Vector field, basin labels and an SVG portrait.
    Phase(CommonArgs),
    /// Paired-simulation output residuals and condition residuals.
    Invariance(CommonArgs),
    /// Coordinate-substitution checks.
    DcCheck(CommonArgs),
    /// Every experiment for the four paper parameterizations plus a summary.
    ReproducePaper(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibria(_) => "equilibria",
            Command::Simulate(_) => "simulate",
            Command::Phase(_) => "phase",
            Command::Invariance(_) => "invariance",
            Command::DcCheck(_) => "dc-check",
            Command::ReproducePaper(_) => "reproduce-paper",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Equilibria(a)
            | Command::Simulate(a)
            | Command::Phase(a)
            | Command::Invariance(a)
            | Command::DcCheck(a)
            | Command::ReproducePaper(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise seed; overrides INVARIA_SEED and the config's `seed`.
    #[arg(long, env = "INVARIA_SEED")]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load(args: &CommonArgs) -> Result<config::Resolved, CliError> {
    let cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            config::parse(&text)?
        }
        None => config::Config::default(),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    config::resolve(cfg, seed, args.out.clone())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let resolved = load(cli.command.args())?;
    match &cli.command {
        Command::Equilibria(_) => commands::equilibria(&resolved),
        Command::Simulate(_) => commands::simulate(&resolved),
        Command::Phase(_) => commands::phase(&resolved),
        Command::Invariance(_) => commands::invariance(&resolved),
        Command::DcCheck(_) => commands::dc_check(&resolved),
        Command::ReproducePaper(_) => commands::reproduce_paper(&resolved),
    }
}
