use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match pcqr::cli::run(pcqr::cli::Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
