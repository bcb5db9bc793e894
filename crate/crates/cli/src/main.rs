//! `shdf`: build embedding trees, compile share plans, run the toy simulator
//! and sweep τ.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use shdf_core::Error;

use crate::args::Cli;

/// Exit status for an error: 2 for usage and configuration problems, 3 for
/// bad or unreadable data.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Config(_) => 2,
        Error::Domain(_) | Error::Parse { .. } | Error::Io { .. } | Error::Json(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("shdf: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
