//! `svrbench`: command-line runner for reconstruction experiments.
//!
//! [`run_command`] parses an argument vector, executes one subcommand and
//! returns the process exit code: 0 on success, 1 for usage errors, 2 for
//! data or format errors and 3 for numerical failures. Failures print one
//! diagnostic line to stderr.

pub mod args;
mod commands;
mod config;
pub mod error;
mod experiment;
mod files;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Method, Mode};
pub use error::{CliError, CliResult};
pub use experiment::summarize;

use args::{Cli, Command};

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Reconstruct(a) => commands::reconstruct_cmd(a),
        Command::Score(a) => commands::score(a),
        Command::Evaluate(a) => commands::evaluate_cmd(a),
        Command::SweepAlpha(a) => commands::sweep_cmd(a),
        Command::FullExp(a) => {
            let table = experiment::full_exp(a)?;
            print!("{table}");
            Ok(())
        }
    }
}

enum Parsed {
    Run(Box<Cli>),
    Exit(i32),
}

fn parse(argv: Vec<OsString>) -> CliResult<Parsed> {
    let argv = argv
        .into_iter()
        .map(|a| a.into_string().map_err(|a| CliError::Usage(format!("argument {a:?} is not valid UTF-8"))))
        .collect::<CliResult<Vec<String>>>()?;
    let argv = config::merge_config(argv)?;
    match Cli::try_parse_from(argv) {
        Ok(cli) => Ok(Parsed::Run(Box::new(cli))),
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                Ok(Parsed::Exit(0))
            }
            ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                let _ = e.print();
                Ok(Parsed::Exit(1))
            }
            _ => {
                // Keep the message on one line: drop the usage block and join the rest.
                let text = e.to_string();
                let msg: Vec<&str> = text
                    .lines()
                    .take_while(|l| !l.starts_with("Usage:"))
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .collect();
                Err(CliError::Usage(msg.join(" ").trim_start_matches("error: ").to_string()))
            }
        },
    }
}

/// Runs one `svrbench` invocation; `argv[0]` is the program name.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let result = parse(argv.into_iter().map(Into::into).collect()).and_then(|parsed| match parsed {
        Parsed::Run(cli) => dispatch(&cli).map(|()| 0),
        Parsed::Exit(code) => Ok(code),
    });
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("svrbench: {err}");
            err.exit_code()
        }
    }
}
