mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;

// 0 success or fair verdict, 1 bias verdict, 2 usage or data error
fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => commands::plan(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Score(a) => commands::score(a),
        Command::Decide(a) => commands::decide(a),
        Command::Agree(a) => commands::agree(a),
        Command::Serve(a) => commands::serve(a),
        Command::Audit(a) => commands::audit(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Bias) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
