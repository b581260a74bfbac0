mod args;
mod commands;
mod config;
mod error;

use std::io;
use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = args::Cli::parse();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match commands::run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.render());
            ExitCode::from(failure.kind.exit_code() as u8)
        }
    }
}
