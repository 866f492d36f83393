//! `rcpdyn`: simulations, stability charts, bifurcation sweeps and
//! characteristic roots of the RCP fluid models, written as CSV/JSON.

mod args;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::{BifurcateArgs, ChartArgs, ModelArgs, RootsArgs, SimulateArgs};

/// Run failures, by exit status.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Bad flags, config or parameter values: exit 2.
    #[error("{0}")]
    Usage(String),
    /// The numerics failed (divergence): exit 3. Partial output is written.
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl From<rcpdyn::Error> for Failure {
    fn from(e: rcpdyn::Error) -> Self {
        use rcpdyn::Error::*;
        match e {
            InvalidParameter { .. } | UndefinedMapping | VariantMismatch { .. } | NotOnBoundary { .. } | Config(_) => {
                Failure::Usage(e.to_string())
            }
            EmptyWindow | NoBracket | NoRoots => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rcpdyn", version, about = "Explore the stability of RCP fluid models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one model from a perturbed equilibrium.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: SimulateArgs,
        /// JSON file of flag values; flags given on the command line win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Linear stability verdicts over a grid of gains.
    Chart {
        #[command(flatten)]
        run: ChartArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sweep the gain and classify the long-run behaviour.
    Bifurcate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: BifurcateArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rightmost roots of a characteristic equation, as JSON on stdout.
    Roots {
        #[command(flatten)]
        run: RootsArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("RCPDYN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("RCPDYN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { model, run, config } => commands::simulate(model, run, config.as_deref()),
        Command::Chart { run, config } => commands::chart(run, config.as_deref()),
        Command::Bifurcate { model, run, config } => commands::bifurcate(model, run, config.as_deref()),
        Command::Roots { run, config } => commands::roots(run, config.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rcpdyn: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
