use std::io;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use subjprob_cli::args::Cli;
use subjprob_cli::{run, EXIT_OK, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let mut stderr = io::stderr().lock();
    match run(cli.command, &cli.opts, &mut stderr) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("subjprob: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
