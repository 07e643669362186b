//! Artifact writers. Column orders are fixed (documented in the README) and
//! floats print as the shortest decimal that round-trips, so reruns with the
//! same config diff clean.

use std::fs;
use std::path::Path;

use bsde_core::{FdSolution, MeasureEstimate};

use crate::runner::RunOutcome;
use crate::CliError;

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// results.csv: one row per headline estimate.
/// Columns: scenario,solver,level,x0,value,se,z,z_se,oracle,abs_error,rel_error
pub fn write_results(path: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario", "solver", "level", "x0", "value", "se", "z", "z_se", "oracle", "abs_error",
        "rel_error",
    ])?;
    for h in &outcome.summary.headline {
        w.write_record([
            outcome.summary.scenario.clone(),
            h.solver.clone(),
            opt(h.level),
            opt(h.x0),
            num(h.value),
            opt(h.se),
            opt(h.z),
            opt(h.z_se),
            opt(h.oracle),
            opt(h.abs_error),
            opt(h.rel_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// convergence.csv: one row per penalty level and start point.
/// Columns: level,x0,value,se,residual,reflected_value,gap
pub fn write_convergence(path: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "x0", "value", "se", "residual", "reflected_value", "gap"])?;
    for r in &outcome.convergence {
        w.write_record([
            num(r.level),
            num(r.x0),
            num(r.value),
            num(r.se),
            num(r.residual),
            num(r.reflected_value),
            num(r.gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// measure.csv: the binned reflection measure.
/// Columns: t_index,bin_index,x_center,mass,contact_flag
pub fn write_measure(path: &Path, est: &MeasureEstimate) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_index", "bin_index", "x_center", "mass", "contact_flag"])?;
    for i in 0..est.n_time {
        for b in 0..est.n_bins {
            w.write_record([
                i.to_string(),
                b.to_string(),
                num(est.bin_center(b)),
                num(est.mass_at(i, b)),
                (est.contact[i * est.n_bins + b] as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// fd_<label>.csv holds the full space-time field, one row per (t, x) node.
/// Columns: t,x,u,du,multiplier_mass. Grid metadata goes to a JSON sidecar.
pub fn write_fd(dir: &Path, label: &str, sol: &FdSolution) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join(format!("fd_{label}.csv")))?;
    w.write_record(["t", "x", "u", "du", "multiplier_mass"])?;
    for i in 0..=sol.n_steps {
        for k in 0..sol.n_nodes {
            w.write_record([
                num(sol.ts[i]),
                num(sol.xs[k]),
                num(sol.u_at(i, k)),
                num(sol.du_at(i, k)),
                num(sol.multiplier[i * sol.n_nodes + k]),
            ])?;
        }
    }
    w.flush()?;
    let sidecar = serde_json::json!({
        "method": sol.method,
        "theta": sol.theta,
        "n_nodes": sol.n_nodes,
        "n_steps": sol.n_steps,
        "x_lo": sol.xs[0],
        "x_hi": sol.xs[sol.n_nodes - 1],
        "barrier_violation": sol.barrier_violation,
        "total_multiplier_mass": sol.total_multiplier_mass(),
    });
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(dir.join(format!("fd_{label}.json")), text)?;
    Ok(())
}

/// Writes every artifact the run produced into `dir`, creating it if needed.
pub fn write_all(dir: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_results(&dir.join("results.csv"), outcome)?;

    let mut summary = serde_json::to_string_pretty(&outcome.summary)?;
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;

    if !outcome.convergence.is_empty() {
        write_convergence(&dir.join("convergence.csv"), outcome)?;
    }
    if let Some(est) = &outcome.measure {
        write_measure(&dir.join("measure.csv"), est)?;
    }
    for (label, sol) in &outcome.fd_solutions {
        write_fd(dir, label, sol)?;
    }
    if let Some(bundle) = &outcome.bundle {
        bundle.write_binary(&dir.join("bundle.bin"))?;
    }
    Ok(())
}
