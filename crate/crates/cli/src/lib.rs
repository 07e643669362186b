//! Command implementations behind the `bsde` binary: config loading,
//! scenario lookup, experiment execution, and artifact writing.

use std::path::Path;

pub mod config;
pub mod oracles;
pub mod output;
pub mod runner;
pub mod scenarios;

use config::ExperimentConfig;
use runner::{CheckStatus, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Anything wrong with the configuration itself; exits with code 2.
    #[error("{0}")]
    Config(String),
    /// Solver or diagnostic failure at runtime; exits with code 3.
    #[error(transparent)]
    Core(#[from] bsde_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Resolves a raw config against the registry and the output-directory
/// environment override.
pub fn resolve_config(cfg: ExperimentConfig) -> Result<config::ResolvedConfig, CliError> {
    let defaults = match &cfg.scenario {
        Some(name) => {
            let s = scenarios::find(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown scenario \"{name}\"; known scenarios: {}",
                    scenarios::known_names()
                ))
            })?;
            Some((s.defaults)())
        }
        None => None,
    };
    config::resolve(cfg, defaults.as_ref(), std::env::var("BSDE_OUTPUT_DIR").ok())
}

/// Runs the experiment described by the config file and writes all
/// artifacts. Returns the outcome so callers can inspect check results; the
/// binary turns failed checks into exit code 1.
pub fn run_command(config_path: &Path) -> Result<RunOutcome, CliError> {
    let rc = resolve_config(load_config(config_path)?)?;
    let inst = scenarios::instantiate(&rc)?;
    let outcome = runner::execute(&rc, &inst)?;
    output::write_all(Path::new(&rc.output_dir), &outcome)?;
    Ok(outcome)
}

/// Checks the config and the problem's standing assumptions without running
/// any solver. Returns the check report lines and whether all passed.
pub fn validate_command(config_path: &Path) -> Result<(Vec<String>, bool), CliError> {
    let rc = resolve_config(load_config(config_path)?)?;
    let inst = scenarios::instantiate(&rc)?;
    let plan = bsde_core::ProbePlan::over_box(vec![inst.probe_box.0], vec![inst.probe_box.1]);
    let report = bsde_core::model::validate_problem(&inst.spec, &plan)?;
    let lines = report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{:<28} {} (worst margin {:+.3e} at {})",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.worst_margin,
                c.worst_probe
            )
        })
        .collect();
    Ok((lines, report.passed))
}

/// The registry listing printed by `list-scenarios`.
pub fn list_command() -> Vec<String> {
    scenarios::all()
        .iter()
        .map(|s| format!("{:<24} {}", s.name, s.blurb))
        .collect()
}

/// True when no executed check failed (skips do not count against a run).
pub fn all_checks_passed(outcome: &RunOutcome) -> bool {
    outcome
        .summary
        .checks
        .iter()
        .all(|c| c.status != CheckStatus::Fail)
}
