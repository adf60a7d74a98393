//! Command-line front end for the zonodiff observers: single runs, the
//! algorithm × diffusion × topology grid, trajectory replay and the timing
//! benchmark.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{RunFlags, Settings, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "zonodiff", version, about = "Distributed set-based state estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory and run one observer configuration on it.
    Run(RunFlags),
    /// Run both algorithms with and without diffusion on every ring preset.
    Grid {
        #[command(flatten)]
        flags: RunFlags,
        /// Number of consecutive seeds pooled into the summary.
        #[arg(long, value_name = "N")]
        seeds: Option<usize>,
    },
    /// Time the observer sub-steps on random 20-generator zonotopes.
    Bench {
        #[arg(long, value_name = "N", default_value_t = 100_000)]
        reps: usize,
        #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "2,4,6")]
        neighbors: Vec<usize>,
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the observers on a trajectory CSV exported by `run`.
    Replay {
        #[arg(long, value_name = "FILE")]
        trajectory: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(flags) => {
            let dir = commands::cmd_run(&Settings::resolve(&flags, None)?)?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Grid { flags, seeds } => {
            if flags.algorithm.is_some() || flags.diffusion.is_some() || flags.neighbors.is_some() {
                return Err(CliError::Config(
                    "grid sweeps --alg, --diffusion and --neighbors itself".into(),
                ));
            }
            let dir = commands::cmd_grid(&Settings::resolve(&flags, seeds)?)?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Bench { reps, neighbors, seed, out } => {
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            commands::cmd_bench(reps, &neighbors, seed, &dir)?;
            eprintln!("wrote {}", dir.join(commands::BENCH_FILE).display());
        }
        Command::Replay { trajectory, flags } => {
            let dir = commands::cmd_replay(&Settings::resolve(&flags, None)?, &trajectory)?;
            eprintln!("wrote {}", dir.display());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code
/// (0 ok, 1 configuration error, 2 runtime error, 3 containment violation).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
