use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = namegrounder::cli::Cli::parse();
    match namegrounder::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
