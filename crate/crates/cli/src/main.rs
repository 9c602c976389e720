mod cli;
mod commands;
mod config;
mod manifest;
mod oracles;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use entred_core::audit::AuditError;
use entred_core::entre::EntreError;
use entred_core::eval::EvalError;
use entred_core::oracle::OracleError;

use crate::cli::Cli;

/// Invalid invocation detected after argument parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

const EXIT_FAILURE: u8 = 1;
const EXIT_ORACLE: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn is_oracle_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<OracleError>()
            || matches!(e.downcast_ref::<EntreError>(), Some(EntreError::Oracle(_)))
            || matches!(e.downcast_ref::<EvalError>(), Some(EvalError::Oracle(_)))
            || matches!(e.downcast_ref::<AuditError>(), Some(AuditError::Oracle(_)))
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<Usage>()) {
        EXIT_USAGE
    } else if is_oracle_failure(err) {
        EXIT_ORACLE
    } else {
        EXIT_FAILURE
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    init_logging(&cli);
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
