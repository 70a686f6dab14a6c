mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_degrade, cmd_eval, cmd_solve, CmdResult, SolveOverrides};

#[derive(Parser)]
#[command(
    name = "unroll",
    about = "Joint deblurring and low-light enhancement via an unrolled augmented-Lagrangian solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize degraded/ground-truth pairs with known kernels and
    /// illuminance maps.
    Degrade {
        #[arg(long)]
        config: PathBuf,
    },
    /// Restore degraded images and write per-run manifests.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Reproduce the printed update formulas instead of the rederived
        /// stationary forms (for comparison; expect divergence).
        #[arg(long)]
        paper_literal: bool,
        /// Override the number of unrolled blocks.
        #[arg(long)]
        blocks: Option<usize>,
        /// Dump per-block snapshots and a residual trace.
        #[arg(long)]
        dump: bool,
    },
    /// Score restored images against ground truth, one JSON line per pair
    /// plus an aggregate line.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Degrade { config } => cmd_degrade(&config),
        Command::Solve {
            config,
            paper_literal,
            blocks,
            dump,
        } => cmd_solve(
            &config,
            &SolveOverrides {
                paper_literal,
                blocks,
                dump,
            },
        ),
        Command::Eval { pred, gt, out } => cmd_eval(&pred, &gt, &out),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("UNROLL_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}
