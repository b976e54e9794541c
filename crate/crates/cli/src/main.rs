//! `spg`: fit, decode, simulate and validate the precipitation HMM from the
//! command line. Machine outputs go to files; progress and errors go to stderr.

mod args;
mod commands;
mod common;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult, EXIT_USAGE};

fn run(cli: Cli) -> CliResult<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Decode(a) => commands::decode::run(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Stats(a) => commands::stats::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
