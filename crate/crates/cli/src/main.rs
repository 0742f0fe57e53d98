use std::process::ExitCode;

use clap::Parser;
use ulfsynth_cli::{init_logging, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.log_level);
    let result = run(cli);
    if let Err(e) = &result {
        tracing::error!("{e}");
    }
    ExitCode::from(ulfsynth_cli::exit_code(&result))
}
