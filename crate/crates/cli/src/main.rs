//! `fpp`: simulate, sweep, schedule, verify and analyze from the command line.
//!
//! Exit status: 0 success, 1 failed check, 2 configuration error, 3 runtime
//! failure. Human text goes to standard error; data goes to files.

mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn parse() -> Result<Cli, ExitCode> {
    let raw: Vec<_> = std::env::args_os().collect();
    let argv = match config::expand_args(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(ExitCode::from(e.exit_code()));
        }
    };
    Cli::try_parse_from(argv).map_err(|e| {
        eprint!("{}", e.render());
        ExitCode::from(if e.use_stderr() { 2 } else { 0 })
    })
}

fn main() -> ExitCode {
    let cli = match parse() {
        Ok(c) => c,
        Err(code) => return code,
    };
    match commands::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::CheckFailed(m) => eprintln!("FAILED: {m}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
