use std::process::ExitCode;

use clap::Parser;
use vlp_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match vlp_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
