use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochafem::{run, Command, Outcome, RunOptions};

/// Stochastic finite element analysis by couple decomposition.
#[derive(Parser)]
#[command(name = "stochafem", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve for the couple expansion.
    Solve(RunArgs),
    /// Direct Monte Carlo reference solution.
    Mc(RunArgs),
    /// Compare the expansion with the Monte Carlo responses.
    Compare(RunArgs),
    /// Time the solve for several load field truncations.
    Scaling(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Mc(a) => (Command::Mc, a),
        Sub::Compare(a) => (Command::Compare, a),
        Sub::Scaling(a) => (Command::Scaling, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions {
        config: args.config,
        out: args.out,
        seed: args.seed,
    };
    match run(command, &opts) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::Unconverged) => {
            eprintln!("warning: tolerance not reached");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
