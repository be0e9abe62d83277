use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = branco_lab::cli::Cli::parse();
    ExitCode::from(branco_lab::cli::run(cli))
}
