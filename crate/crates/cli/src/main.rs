use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bsde_cli::{all_checks_passed, list_command, run_command, validate_command, CliError};

#[derive(Parser)]
#[command(name = "bsde", version, about = "Backward-SDE experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config and write its artifacts
    Run { config: PathBuf },
    /// Print the scenario registry
    ListScenarios,
    /// Check a config and its problem assumptions without solving
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config } => {
            let outcome = run_command(&config)?;
            for c in &outcome.summary.checks {
                println!("{:<40} {}", c.name, c.status.label());
            }
            if all_checks_passed(&outcome) {
                println!("ok: all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                let failed = outcome.summary.failed_names().join(", ");
                eprintln!("failed checks: {failed}");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::ListScenarios => {
            for line in list_command() {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let (lines, passed) = validate_command(&config)?;
            for line in lines {
                println!("{line}");
            }
            Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
