//! `membrane`: solves, branch sweeps, pull-in estimation, stability
//! eigenvalues and the acceptance suite from the command line.
//!
//! Exit status: 0 success, 2 configuration error, 3 touchdown on `solve`,
//! 4 numerical or I/O failure.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|cause| {
        cause
            .downcast_ref::<membrane_core::Error>()
            .is_some_and(|e| e.is_configuration())
            || cause.downcast_ref::<args::ConfigError>().is_some()
    });
    if config {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}
