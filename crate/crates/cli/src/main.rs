use clap::{Parser, Subcommand};
use metric_sir_cli::run::worker_count;
use metric_sir_cli::{analyze, parse_config, run, sweep, CliError};
use std::path::PathBuf;
use std::process::ExitCode;

/// SIR epidemics on metric graphs.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print its normalized form.
    Validate { config: PathBuf },
    /// Simulate and write the trajectory and summary.
    Run { config: PathBuf },
    /// Final-size analysis from the closed forms, without simulating.
    Analyze { config: PathBuf },
    /// Run every value of the sweep axis (workers from METRIC_SIR_WORKERS).
    Sweep { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { config } => {
            let c = parse_config(&config)?;
            print!("{}", c.to_toml());
        }
        Command::Run { config } => {
            let outcome = run(&parse_config(&config)?)?;
            for w in &outcome.summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
        }
        Command::Analyze { config } => {
            let report = analyze(&parse_config(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Sweep { config } => {
            let outcome = sweep(&parse_config(&config)?, worker_count())?;
            print!("{}", outcome.table);
            if let Some(e) = outcome.first_error {
                return Err(e);
            }
        }
    }
    Ok(())
}
