//! `einconv`: enumerate, reduce, analyze, train and search convolution layers
//! written as tensor-network hypergraphs.

mod analyze;
mod enumerate;
mod pareto;
mod search;
mod train;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use util::CliResult;

#[derive(Parser, Debug)]
#[command(name = "einconv", version, about)]
struct Cli {
    /// Worker threads for enumerate/search (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List every nonredundant graph for a filter size and rank budget.
    Enumerate(enumerate::EnumerateArgs),
    /// Apply redundancy rewrites until none applies.
    Reduce(analyze::ReduceArgs),
    /// Parameter count, FLOPs, canonical hash and reduction trace.
    Analyze(analyze::GraphArgs),
    /// Train a network, writing history.csv and a checkpoint.
    Train(train::TrainArgs),
    /// Multiobjective search over graphs (accuracy vs parameters).
    Search(search::SearchArgs),
    /// Nondominated rows of an archive CSV.
    Pareto(pareto::ParetoArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| util::CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Enumerate(a) => enumerate::run(a),
        Command::Reduce(a) => analyze::reduce_cmd(a),
        Command::Analyze(a) => analyze::analyze(a),
        Command::Train(a) => train::run(a),
        Command::Search(a) => search::run(a),
        Command::Pareto(a) => pareto::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json());
            ExitCode::from(e.code as u8)
        }
    }
}
