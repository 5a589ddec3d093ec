use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::LevelFilter;
use mmbm::diag::{init_logging, EXIT_INPUT};
use mmbm::{execute, Cli, CliError};

fn main() -> ExitCode {
    init_logging(LevelFilter::Warn);
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::input("UsageError", e.to_string().trim());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.outputs.join("\n"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit as u8)
        }
    }
}
