mod args;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, flag values or unreadable inputs.
    Usage(anyhow::Error),
    /// One diagnostic per invalid input record.
    Invalid(Vec<String>),
    /// Output could not be written.
    Io(anyhow::Error),
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SEGREW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(anyhow::anyhow!(
            "SEGREW_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.into()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    match &cli.command {
        Command::Segment(a) => commands::segment(a),
        Command::Mask(a) => commands::mask(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Score(a) => commands::score(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::TrainToy(a) => commands::train_toy(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Invalid(diagnostics)) => {
            for d in &diagnostics {
                eprintln!("error: {d}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
