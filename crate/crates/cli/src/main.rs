//! `coxmatch`: fit, compare, simulate and evaluate in-game football models.
//!
//! Exit status is 0 on success, 1 when the numerics fail (non-identifiable
//! model, no convergence) and 2 for usage or input errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "coxmatch", version, about = "Point-process models of football matches")]
struct Cli {
    /// Worker threads for likelihood and simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Matches CSV.
    #[arg(long)]
    matches: PathBuf,
    /// Events CSV.
    #[arg(long)]
    events: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Convergence tolerance on the reduced gradient (infinity norm).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a named model and write the model artifact.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Model name, e.g. G4S5R.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Information criteria and likelihood-ratio tests for fitted artifacts,
    /// each tested against the one listed before it.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        fits: Vec<PathBuf>,
        /// Sample size for BIC (default: matches recorded in the artifacts).
        #[arg(long)]
        n_matches: Option<usize>,
    },
    /// Simulate one fixture from kickoff or from a logged state.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        home: String,
        #[arg(long)]
        away: String,
        /// Lineup values `home,away` (million EUR).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// JSON array of log entries describing the match so far.
        #[arg(long)]
        from_state: Option<PathBuf>,
        /// Write every scenario's events to this CSV.
        #[arg(long)]
        scenario_log: Option<PathBuf>,
    },
    /// Forecasts of a logged match at the given minutes.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        /// JSON match log: fixture and entries.
        #[arg(long)]
        match_state: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,15,30,45,60,75")]
        minutes: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output a CSV summary instead of the full JSON forecasts.
        #[arg(long)]
        csv: bool,
    },
    /// Rolling-window evaluation of several models on a dataset.
    Evaluate {
        /// Model names (refitted on each window) or artifact files (held fixed).
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<String>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,15,30,45,60,75")]
        minutes: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Model the differences are taken against (default: the first).
        #[arg(long)]
        baseline: Option<String>,
        /// Refit named models every this many match dates.
        #[arg(long, default_value_t = 1)]
        refit_every: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Minute-by-minute forecasts of a recorded match.
    Replay {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        match_id: String,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Number of most likely exact scores per row.
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Descriptive tables of a dataset.
    Summary {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = commands::SummaryTable::Overview)]
        table: commands::SummaryTable,
    },
    /// Generate a synthetic league from a built-in league-scale model.
    Generate {
        #[arg(long, default_value = "G4S5R")]
        model: String,
        #[arg(long, default_value_t = 33)]
        teams: usize,
        #[arg(long, default_value_t = 20)]
        teams_per_season: usize,
        #[arg(long, default_value_t = 8)]
        seasons: usize,
        #[arg(long)]
        max_matches: Option<usize>,
        #[arg(long, default_value_t = 0.15)]
        value_noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        matches_out: PathBuf,
        #[arg(long)]
        events_out: PathBuf,
    },
    /// List the model names that can be fitted.
    Models,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<coxmatch::Error>())
        .any(|c| c.is_numerical());
    if numerical {
        1
    } else {
        2
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(|ce| {
                matches!(ce.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
            })
    })
}
