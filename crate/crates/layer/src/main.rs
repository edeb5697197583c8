use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use layer::cli::{error_json, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", error_json("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::from(if e.kind() == "usage" { 2 } else { 1 })
        }
    }
}
