use std::process::ExitCode;

use clap::Parser;
use semcom_alloc::cli::{error_line, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: kind=selfcheck msg=\"one or more checks failed\"");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
