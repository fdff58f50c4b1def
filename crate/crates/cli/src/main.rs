//! Command-line front end: stable models, probabilities, sampling, coherence
//! checks, learning and the bundled experiments.

mod commands;
mod load;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "neurasp", version, about = "Answer set programs with neural atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the stable models with their probabilities.
    Models(Common),
    /// Probability of each observation and its most probable model.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MapArg::Auto)]
        map: MapArg,
    },
    /// Draw stable models through sampled total choices.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Check that every total choice has a stable model.
    Check {
        #[command(flatten)]
        common: Common,
        /// Check this many random choices instead of all of them.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the networks on the observations.
    Learn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Run a bundled experiment.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Program file.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Network manifests (TOML), one per network.
    #[arg(long, num_args = 1..)]
    networks: Vec<PathBuf>,
    /// Weight files as NAME=PATH.
    #[arg(long, num_args = 1..)]
    weights: Vec<String>,
    /// Observation file; observations are separated by blank lines.
    #[arg(long)]
    observations: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for weights.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_models: Option<usize>,
    /// Maximum number of conflicts per search.
    #[arg(long)]
    conflict_budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = OptModeArg::Optimal)]
    opt_mode: OptModeArg,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print the ground program to stderr.
    #[arg(long)]
    dump_ground: bool,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Models per observation in sampled mode.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Metrics CSV path; printed to stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Paper)]
    grad_convention: ConventionArg,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Observations per update; the gradients of a batch are computed in parallel.
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Training pairs (addition) or training instances/boards.
    #[arg(long)]
    train_size: Option<usize>,
    /// Test instances or boards.
    #[arg(long)]
    test_size: Option<usize>,
    /// Constraint pack for the shortest-path experiment.
    #[arg(long, default_value = "p-r-o")]
    pack: String,
    /// Sudoku variant.
    #[arg(long, default_value = "standard")]
    variant: String,
    /// Per-cell confusion rate of the noised Sudoku perception.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Directory with the digit IDX files.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Enumerate,
    Optimize,
    Auto,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum OptModeArg {
    #[default]
    Optimal,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Paper,
    Jacobian,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Coin,
    Addition,
    Sudoku,
    SudokuSolve,
    Spath,
    Commonsense,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    /// No models, zero probability or an incoherent program.
    Empty = 1,
    Usage = 2,
    Budget = 3,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(s) => ExitCode::from(s as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::status_of(&e) as u8)
        }
    }
}
