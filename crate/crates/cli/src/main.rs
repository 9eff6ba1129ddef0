//! `vlmd` command-line tool.

mod commands;
mod config;
mod error;
mod io;
mod manifest;
mod preprocess;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, cluster, decompose, filter, synth};
use error::{CliError, CliResult};

/// Latent mode decomposition of multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "vlmd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a CSV of channels into modes.
    Decompose(decompose::DecomposeArgs),
    /// Drop leading/trailing rows and columns with too many zeros.
    FilterClients(filter::FilterArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(synth::SynthArgs),
    /// Run the synthetic benchmark grid.
    Bench(bench::BenchArgs),
    /// Cluster channels of a decomposition run.
    Cluster(cluster::ClusterArgs),
}

/// `VLMD_THREADS` caps the worker pool used by benchmarks and clustering.
fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("VLMD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("VLMD_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Decompose(a) => decompose::run(a),
        Command::FilterClients(a) => filter::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Cluster(a) => cluster::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One line, `error[kind]: message`, for scripts.
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
