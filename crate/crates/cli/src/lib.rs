//! `ssam`: run simulated systolic kernels against their oracles, evaluate
//! the latency model, sweep benchmarks and inspect block decompositions.
//!
//! Exit status is 0 when everything checked passes, 1 when a kernel
//! disagrees with its oracle (or a model cross-check fails) and 2 for
//! usage or input errors.

pub mod bench;
pub mod common;
pub mod cost;
pub mod halo;
pub mod run;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ssam",
    version,
    about = "Software systolic array simulator and latency model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one kernel on seeded data and compare it with its oracle.
    Run(run::RunArgs),
    /// Evaluate the latency model for one filter shape or a sweep.
    Cost(cost::CostArgs),
    /// Run a benchmark suite with verification.
    Bench(bench::BenchArgs),
    /// Report halo ratios, measured redundancy and block coverage.
    Halo(halo::HaloArgs),
}

/// Parse `args` (program name first) and execute, returning the exit status.
pub fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::Cost(args) => cost::cmd_cost(args),
        Command::Bench(args) => bench::cmd_bench(args),
        Command::Halo(args) => halo::cmd_halo(args),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
