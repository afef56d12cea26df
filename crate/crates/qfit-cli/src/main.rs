use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qfit_cli::Cli::parse();
    match qfit_cli::run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
