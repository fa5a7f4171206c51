//! `schmidt-lab`: operator Schmidt analysis, control detection and LOCC
//! protocol simulation from the command line.
//!
//! Every command prints one JSON object `{status, payload, diagnostics}` on
//! standard output and a one-line summary on standard error. Exit codes: 0 ok,
//! 1 negative verdict, 2 invalid input, 3 numerical failure, 4 inconclusive.

mod commands;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use schmidt_lab_core::control::Tolerances;
use schmidt_lab_core::matrix::DEFAULT_MAX_DIM;

use commands::{Context, RouteArg};
use report::{CommandResult, Failure};

const MAX_DIM_VAR: &str = "SCHMIDT_LAB_MAX_DIM";

#[derive(Parser)]
#[command(name = "schmidt-lab", version, about = "Operator Schmidt analysis of bipartite and multipartite unitaries")]
struct Cli {
    /// Echo matrices (factors, blocks, outputs) in the payload.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator Schmidt decomposition across a cut.
    Decompose {
        path: PathBuf,
        /// 1-based systems on one side of the cut (default: 1).
        #[arg(long, value_delimiter = ',')]
        cut: Option<Vec<usize>>,
        /// Relative singular-value cutoff.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Decide whether the gate is controlled (or block-controlled) from a side.
    Detect {
        path: PathBuf,
        /// `A`, `B`, or comma-separated 1-based systems.
        #[arg(long)]
        side: Option<String>,
        /// Test for a block-controlled unitary instead.
        #[arg(long)]
        bcu: bool,
    },
    /// Build a named gate and print it as matrix JSON.
    Construct {
        #[arg(long)]
        gate: String,
        /// `{"n": 5}` or `n=5,seed=2`.
        #[arg(long)]
        params: Option<String>,
    },
    /// Simulate an LOCC implementation over every measurement branch.
    Protocol {
        #[arg(long, value_enum, default_value = "auto")]
        route: RouteArg,
        path: PathBuf,
        /// `plus`, `basis:K`, `random:SEED` or a state JSON file.
        #[arg(long)]
        input: Option<String>,
    },
    /// Search product inputs for the largest output Schmidt rank.
    SchmidtNumber {
        path: PathBuf,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate scrambled instances and check a structure theorem on each.
    Fuzz {
        /// sch3, sch2-diagonal, multi or even-qubit.
        #[arg(long)]
        theorem: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn max_dim() -> Result<usize, Failure> {
    match std::env::var(MAX_DIM_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::input(format!("{MAX_DIM_VAR} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(DEFAULT_MAX_DIM),
    }
}

fn run(cli: Cli) -> Result<CommandResult, Failure> {
    let ctx = Context { tol: Tolerances { max_dim: max_dim()?, ..Tolerances::default() }, verbose: cli.verbose };
    match cli.command {
        Command::Decompose { path, cut, tol } => commands::decompose(&ctx, &path, cut, tol),
        Command::Detect { path, side, bcu } => commands::detect(&ctx, &path, side.as_deref(), bcu),
        Command::Construct { gate, params } => commands::construct(&ctx, &gate, params.as_deref()),
        Command::Protocol { route, path, input } => commands::protocol(&ctx, route, &path, input.as_deref()),
        Command::SchmidtNumber { path, restarts, seed } => commands::schmidt_number(&ctx, &path, restarts, seed),
        Command::Fuzz { theorem, trials, seed } => commands::fuzz(&ctx, &theorem, trials, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let result = CommandResult::failed(Failure::input(e.kind().to_string()));
            println!("{}", result.to_json());
            return ExitCode::from(result.exit_code());
        }
    };
    let result = run(cli).unwrap_or_else(CommandResult::failed);
    println!("{}", result.to_json());
    eprintln!("{}: {}", result.status.name(), result.summary);
    ExitCode::from(result.exit_code())
}
