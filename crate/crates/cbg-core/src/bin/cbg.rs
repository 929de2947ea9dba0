//! `cbg`: labyrinth circular Bragg grating design toolkit.

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use cbg_core::cli::{
    cmd_check, cmd_optimize, cmd_simulate, cmd_sweep, CheckArgs, OptimizeArgs, SimulateArgs,
    SweepArgs,
};

#[derive(Parser)]
#[command(
    name = "cbg",
    about = "Model, simulate, and optimize labyrinth circular Bragg grating cavities",
    version
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one design through the FDTD pipeline and write its spectra.
    Simulate(SimulateArgs),
    /// Re-run a design while offsetting one geometry parameter.
    Sweep(SweepArgs),
    /// Two-stage global/local design optimization.
    Optimize(OptimizeArgs),
    /// Evaluate the closed-form reference identities.
    Check(CheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            eprintln!("cbg: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cbg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
