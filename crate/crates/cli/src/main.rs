//! `tconv`: filter design, data preparation, training, evaluation and
//! analysis exports for learnable filter-bank heart sound classifiers.

mod analyze;
mod args;
mod data_cmds;
mod design;
mod error;
mod manifest;
mod report;
mod train_cmds;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    match cli.command {
        Command::Design(a) => design::design(a, argv),
        Command::Response(a) => design::response(a, argv),
        Command::Synth(a) => data_cmds::synth(a, argv),
        Command::Ingest(a) => data_cmds::ingest(a, argv),
        Command::Segment(a) => data_cmds::segment(a, argv),
        Command::Folds(a) => data_cmds::folds(a, argv),
        Command::Train(a) => train_cmds::train(a, argv),
        Command::Eval(a) => train_cmds::eval(a, argv),
        Command::Report(a) => report::report(a, argv),
        Command::Analyze(a) => analyze::analyze(a, argv),
    }
}
