//! Experiment execution: batched Monte Carlo solves whose standard errors
//! come from independent sub-bundles, deterministic finite-difference runs,
//! and the named invariant checks that gate the exit status.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use bsde_core::bsde::solve_bsde;
use bsde_core::fd::{feynman_kac_compare, solve_obstacle_fd, solve_pde_fd};
use bsde_core::model::validate_problem;
use bsde_core::norms::{equivalence_ratio, flow_ratio_estimate};
use bsde_core::rbsde::{
    estimate_measure, skorokhod_residual, solve_rbsde_penalized, solve_rbsde_reflected,
    weighted_mean_terminal_k,
};
use bsde_core::sde::simulate_bundle_stream;
use bsde_core::{
    BackwardSolution, BoundaryMode, CoreError, DiffusionSpec, FdGrid, FdSolution, FlowSample,
    MeasureEstimate, NormLattice, ObstacleMethod, ObstacleSpec, PathBundle, ProbePlan,
    ProblemSpec, SolveOpts, TimeGrid, WeightSpec,
};

use crate::config::{ResolvedConfig, SolverKind, Tolerances};
use crate::scenarios::Instance;

/// Contact tolerance scale handed to the measure estimator: a cell counts as
/// contact when its mean gap is below this times (1 + mean |h|).
const CONTACT_TOL_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skip => "skip",
        }
    }
}

/// One named invariant or oracle comparison; every executed check appears
/// exactly once in the summary.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    pub observed: f64,
    pub bound: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn gate(name: &str, ok: bool, observed: f64, bound: f64, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            observed,
            bound,
            detail,
        }
    }

    fn skip(name: &str, detail: &str) -> Self {
        CheckOutcome {
            name: name.into(),
            status: CheckStatus::Skip,
            observed: 0.0,
            bound: 0.0,
            detail: detail.into(),
        }
    }
}

/// One results.csv row. `x0` is empty for diagnostics that are not tied to a
/// start point; oracle columns are filled only where a reference applies.
#[derive(Debug, Clone, Serialize)]
pub struct Headline {
    pub solver: String,
    pub level: Option<f64>,
    pub x0: Option<f64>,
    pub value: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub z_se: Option<f64>,
    pub oracle: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
}

impl Headline {
    fn against(mut self, oracle: Option<f64>) -> Self {
        if let Some(o) = oracle {
            self.oracle = Some(o);
            self.abs_error = Some((self.value - o).abs());
            if o != 0.0 {
                self.rel_error = Some((self.value - o).abs() / o.abs());
            }
        }
        self
    }
}

fn row(solver: &str, level: Option<f64>, x0: Option<f64>, value: f64, se: Option<f64>) -> Headline {
    Headline {
        solver: solver.into(),
        level,
        x0,
        value,
        se,
        z: None,
        z_se: None,
        oracle: None,
        abs_error: None,
        rel_error: None,
    }
}

/// One convergence.csv row for penalty schedules.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub level: f64,
    pub x0: f64,
    pub value: f64,
    pub se: f64,
    pub residual: f64,
    pub reflected_value: f64,
    pub gap: f64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub solver: SolverKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_label: Option<String>,
    pub headline: Vec<Headline>,
    pub checks: Vec<CheckOutcome>,
    /// Named scalar by-products (residuals, norms, premiums, ...).
    pub diagnostics: BTreeMap<String, f64>,
    pub wall_clock_seconds: f64,
    pub config: ResolvedConfig,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub convergence: Vec<ConvergenceRow>,
    pub measure: Option<MeasureEstimate>,
    /// Labelled fd fields to write out, primary solution first.
    pub fd_solutions: Vec<(String, FdSolution)>,
    pub bundle: Option<PathBundle>,
}

/// Mean and standard error over batch estimates; exact zero spread when all
/// batches agree bitwise (deterministic problems).
pub fn mean_se(vals: &[f64]) -> (f64, f64) {
    let b = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / b;
    if vals.len() < 2 || vals.iter().all(|v| v.to_bits() == vals[0].to_bits()) {
        return (vals[0], 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

/// Per-start-point batch statistics plus the first sub-bundle and its
/// solution, kept for diagnostics that need path data.
pub struct Batched {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub z_se: Vec<f64>,
    pub first_bundle: PathBundle,
    pub first_solution: BackwardSolution,
}

/// Runs `solve` on `batches` bundles drawn from distinct counter streams of
/// the same seed and aggregates start-point values across them. Batches are
/// processed in a fixed order, so the result does not depend on thread
/// count.
pub fn solve_batched<F>(
    spec: &ProblemSpec,
    n_steps: usize,
    points: &[f64],
    paths_per_point: usize,
    batches: usize,
    seed: u64,
    solve: F,
) -> bsde_core::Result<Batched>
where
    F: Fn(&PathBundle) -> bsde_core::Result<BackwardSolution>,
{
    let grid = TimeGrid::uniform(spec.horizon, n_steps);
    let starts: Vec<Vec<f64>> = points.iter().map(|x| vec![*x]).collect();
    let per = (paths_per_point / batches).max(1);
    let jn = points.len();
    let mut vals = vec![Vec::with_capacity(batches); jn];
    let mut zs = vec![Vec::with_capacity(batches); jn];
    let mut first = None;
    for b in 0..batches {
        let bundle = simulate_bundle_stream(&spec.diffusion, &grid, &starts, per, seed, b as u64)?;
        let sol = solve(&bundle)?;
        for j in 0..jn {
            vals[j].push(sol.value_at_start(j));
            zs[j].push(sol.gradient_at_start(j)[0]);
        }
        if b == 0 {
            first = Some((bundle, sol));
        }
    }
    let (first_bundle, first_solution) = first.expect("batches >= 1");
    let mut out = Batched {
        mean: Vec::with_capacity(jn),
        se: Vec::with_capacity(jn),
        z_mean: Vec::with_capacity(jn),
        z_se: Vec::with_capacity(jn),
        first_bundle,
        first_solution,
    };
    for j in 0..jn {
        let (m, s) = mean_se(&vals[j]);
        out.mean.push(m);
        out.se.push(s);
        let (zm, zs_) = mean_se(&zs[j]);
        out.z_mean.push(zm);
        out.z_se.push(zs_);
    }
    Ok(out)
}

fn oracle_check(name: &str, value: f64, se: f64, oracle: f64, tol: &Tolerances) -> CheckOutcome {
    let bound = tol
        .value_abs
        .max(tol.value_rel * oracle.abs())
        .max(tol.se_band * se);
    let diff = (value - oracle).abs();
    CheckOutcome::gate(
        name,
        diff <= bound,
        diff,
        bound,
        format!("estimate {value} vs reference {oracle}"),
    )
}

fn fd_grid_from(rc: &ResolvedConfig) -> FdGrid {
    FdGrid {
        x_lo: rc.fd.x_lo,
        x_hi: rc.fd.x_hi,
        n_nodes: rc.fd.n_nodes,
        n_steps: rc.fd.n_steps,
        boundary: BoundaryMode::DirichletFromTerminal,
        rannacher_steps: rc.fd.rannacher_steps,
        value_bounds: None,
    }
}

fn require_obstacle(spec: &ProblemSpec) -> bsde_core::Result<ObstacleSpec> {
    spec.obstacle
        .clone()
        .ok_or_else(|| CoreError::Shape("this solver needs an obstacle in the problem".into()))
}

/// Executes the resolved experiment and collects everything the artifact
/// writers need. Only infrastructure failures surface as errors; failed
/// invariants become `Fail` checks in the summary.
pub fn execute(rc: &ResolvedConfig, inst: &Instance) -> bsde_core::Result<RunOutcome> {
    let t0 = Instant::now();
    let spec = &inst.spec;
    let tol = &rc.tolerances;
    let points = &rc.grid.initial_points;

    let mut checks = Vec::new();
    let mut headline = Vec::new();
    let mut convergence = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut measure = None;
    let mut fd_solutions = Vec::new();
    let mut bundle = None;

    let plan = ProbePlan::over_box(vec![inst.probe_box.0], vec![inst.probe_box.1]);
    let report = validate_problem(spec, &plan)?;
    checks.push(match report.checks.iter().find(|c| !c.passed) {
        None => CheckOutcome::gate(
            "assumptions_validated",
            true,
            0.0,
            0.0,
            "all sampled invariants hold".into(),
        ),
        Some(c) => CheckOutcome::gate(
            "assumptions_validated",
            false,
            c.worst_margin,
            0.0,
            format!("{} violated near {}", c.name, c.worst_probe),
        ),
    });

    let opts = SolveOpts {
        basis: Some(rc.basis.to_spec()),
        driver_theta: rc.theta,
        ..SolveOpts::default()
    };
    // reference value, tied to the start point closest to its anchor
    let oracle: Option<(usize, f64)> = inst.oracle.as_ref().map(|o| {
        let mut j_star = 0usize;
        let mut best = f64::INFINITY;
        for (j, x) in points.iter().enumerate() {
            let d = (x - o.at).abs();
            if d < best {
                best = d;
                j_star = j;
            }
        }
        (j_star, o.value)
    });
    let orc_at = |j: usize| oracle.and_then(|(js, v)| (js == j).then_some(v));

    match rc.solver {
        SolverKind::Bsde => {
            let b = solve_batched(
                spec,
                rc.grid.n_steps,
                points,
                rc.grid.paths_per_point,
                rc.batches,
                rc.seed,
                |bundle| solve_bsde(spec, bundle, &opts),
            )?;
            for (j, x0) in points.iter().enumerate() {
                let mut r = row("bsde", None, Some(*x0), b.mean[j], Some(b.se[j]));
                r.z = Some(b.z_mean[j]);
                r.z_se = Some(b.z_se[j]);
                headline.push(r.against(orc_at(j)));
            }
            if let Some((js, o)) = oracle {
                checks.push(oracle_check("headline_matches_oracle", b.mean[js], b.se[js], o, tol));
            }
            if rc.dump_bundle {
                bundle = Some(b.first_bundle);
            }
        }

        SolverKind::RbsdeReflected => {
            let obstacle = require_obstacle(spec)?;
            let b = solve_batched(
                spec,
                rc.grid.n_steps,
                points,
                rc.grid.paths_per_point,
                rc.batches,
                rc.seed,
                |bundle| solve_rbsde_reflected(spec, bundle, &opts),
            )?;
            for (j, x0) in points.iter().enumerate() {
                let mut r = row("rbsde-reflected", None, Some(*x0), b.mean[j], Some(b.se[j]));
                r.z = Some(b.z_mean[j]);
                r.z_se = Some(b.z_se[j]);
                headline.push(r.against(orc_at(j)));
            }

            let residual = skorokhod_residual(&b.first_solution, &obstacle, &b.first_bundle);
            checks.push(CheckOutcome::gate(
                "skorokhod_residual_zero",
                residual == 0.0,
                residual,
                0.0,
                "reflection only acts on the contact set".into(),
            ));
            diagnostics.insert("skorokhod_residual".into(), residual);

            // the barrier is respected exactly path by path, so batch means
            // can dip below it only by accumulated rounding
            let worst = points
                .iter()
                .enumerate()
                .map(|(j, x0)| b.mean[j] - obstacle.eval(0.0, &[*x0]))
                .fold(f64::INFINITY, f64::min);
            checks.push(CheckOutcome::gate(
                "values_dominate_obstacle",
                worst >= -1e-9,
                worst,
                0.0,
                "start values sit on or above the barrier".into(),
            ));

            let est = estimate_measure(
                &b.first_solution,
                &b.first_bundle,
                &obstacle,
                &spec.weight,
                rc.measure_bins,
                None,
                CONTACT_TOL_SCALE,
            )?;
            let mean_k = weighted_mean_terminal_k(&b.first_solution, &b.first_bundle, &spec.weight);
            let drift = (est.weighted_total - mean_k).abs();
            checks.push(CheckOutcome::gate(
                "measure_identity",
                drift <= tol.measure_identity,
                drift,
                tol.measure_identity,
                format!("binned total {} vs terminal mean {mean_k}", est.weighted_total),
            ));
            if est.weighted_total > 0.0 {
                let inside = 1.0 - est.mass_outside_contact();
                checks.push(CheckOutcome::gate(
                    "measure_mass_in_contact",
                    inside >= tol.contact_mass,
                    inside,
                    tol.contact_mass,
                    "reflection mass is carried by contact cells".into(),
                ));
            } else {
                checks.push(CheckOutcome::skip(
                    "measure_mass_in_contact",
                    "no reflection mass deposited",
                ));
            }
            diagnostics.insert("measure_weighted_total".into(), est.weighted_total);
            diagnostics.insert("weighted_terminal_k".into(), mean_k);
            diagnostics.insert("measure_overflow".into(), est.overflow);
            measure = Some(est);

            if let Some((js, o)) = oracle {
                checks.push(oracle_check("headline_matches_oracle", b.mean[js], b.se[js], o, tol));
            }
            if rc.dump_bundle {
                bundle = Some(b.first_bundle);
            }
        }

        SolverKind::RbsdePenalized => {
            let obstacle = require_obstacle(spec)?;
            let refl = solve_batched(
                spec,
                rc.grid.n_steps,
                points,
                rc.grid.paths_per_point,
                rc.batches,
                rc.seed,
                |bundle| solve_rbsde_reflected(spec, bundle, &opts),
            )?;
            for (j, x0) in points.iter().enumerate() {
                headline.push(row(
                    "rbsde-reflected",
                    None,
                    Some(*x0),
                    refl.mean[j],
                    Some(refl.se[j]),
                ));
            }

            let mut levels: Vec<(f64, Batched, f64)> = Vec::new();
            for &lv in &rc.penalty_schedule {
                let b = solve_batched(
                    spec,
                    rc.grid.n_steps,
                    points,
                    rc.grid.paths_per_point,
                    rc.batches,
                    rc.seed,
                    |bundle| solve_rbsde_penalized(spec, bundle, lv, &opts),
                )?;
                let residual = skorokhod_residual(&b.first_solution, &obstacle, &b.first_bundle);
                let last = lv == *rc.penalty_schedule.last().expect("nonempty");
                for (j, x0) in points.iter().enumerate() {
                    let r = row("rbsde-penalized", Some(lv), Some(*x0), b.mean[j], Some(b.se[j]));
                    headline.push(r.against(if last { orc_at(j) } else { None }));
                    convergence.push(ConvergenceRow {
                        level: lv,
                        x0: *x0,
                        value: b.mean[j],
                        se: b.se[j],
                        residual,
                        reflected_value: refl.mean[j],
                        gap: (b.mean[j] - refl.mean[j]).abs(),
                    });
                }
                diagnostics.insert(format!("skorokhod_residual_level_{lv}"), residual);
                levels.push((lv, b, residual));
            }

            // monotone in the penalty up to the pooled batch noise
            let mut worst_slack = f64::INFINITY;
            let mut worst_pair = String::new();
            for w in levels.windows(2) {
                let (la, a, _) = &w[0];
                let (lb, bb, _) = &w[1];
                for j in 0..points.len() {
                    let pooled = (a.se[j] * a.se[j] + bb.se[j] * bb.se[j]).sqrt();
                    let slack = bb.mean[j] - a.mean[j] + tol.se_band * pooled;
                    if slack < worst_slack {
                        worst_slack = slack;
                        worst_pair = format!("levels {la} -> {lb} at x0 {}", points[j]);
                    }
                }
            }
            if levels.len() >= 2 {
                checks.push(CheckOutcome::gate(
                    "penalized_monotone_in_levels",
                    worst_slack >= 0.0,
                    worst_slack,
                    0.0,
                    format!("tightest margin at {worst_pair}"),
                ));
                let worst_step = levels
                    .windows(2)
                    .map(|w| w[1].2 - w[0].2)
                    .fold(f64::NEG_INFINITY, f64::max);
                checks.push(CheckOutcome::gate(
                    "penalized_residual_decreasing",
                    worst_step < 0.0,
                    worst_step,
                    0.0,
                    "complementarity residual falls at every schedule step".into(),
                ));
                let gap_of = |b: &Batched| {
                    (0..points.len())
                        .map(|j| (b.mean[j] - refl.mean[j]).abs())
                        .fold(0.0f64, f64::max)
                };
                let last_gap = gap_of(&levels[levels.len() - 1].1);
                let prev_gap = gap_of(&levels[levels.len() - 2].1);
                checks.push(CheckOutcome::gate(
                    "penalized_gap_shrinks",
                    last_gap < prev_gap,
                    last_gap,
                    prev_gap,
                    "distance to the reflected scheme narrows along the schedule".into(),
                ));
            } else {
                checks.push(CheckOutcome::skip(
                    "penalized_monotone_in_levels",
                    "schedule has a single level",
                ));
                checks.push(CheckOutcome::skip(
                    "penalized_residual_decreasing",
                    "schedule has a single level",
                ));
                checks.push(CheckOutcome::skip(
                    "penalized_gap_shrinks",
                    "schedule has a single level",
                ));
            }

            let (_, final_b, _) = levels.pop().expect("nonempty schedule");
            if let Some((js, o)) = oracle {
                checks.push(oracle_check(
                    "headline_matches_oracle",
                    final_b.mean[js],
                    final_b.se[js],
                    o,
                    tol,
                ));
            }
            let est = estimate_measure(
                &final_b.first_solution,
                &final_b.first_bundle,
                &obstacle,
                &spec.weight,
                rc.measure_bins,
                None,
                CONTACT_TOL_SCALE,
            )?;
            diagnostics.insert("measure_weighted_total".into(), est.weighted_total);
            measure = Some(est);
            if rc.dump_bundle {
                bundle = Some(final_b.first_bundle);
            }
        }

        SolverKind::Fd => {
            let grid = fd_grid_from(rc);
            let sol = match &spec.obstacle {
                Some(obs) => solve_obstacle_fd(spec, obs, &grid, ObstacleMethod::Projected)?,
                None => solve_pde_fd(spec, &grid, rc.theta)?,
            };
            for (j, x0) in points.iter().enumerate() {
                let mut r = row("fd", None, Some(*x0), sol.u0(*x0)?, None);
                r.z = Some(sol.du0(*x0)?);
                headline.push(r.against(orc_at(j)));
            }
            if spec.obstacle.is_some() {
                checks.push(CheckOutcome::gate(
                    "fd_barrier_respected",
                    sol.barrier_violation == 0.0,
                    sol.barrier_violation,
                    0.0,
                    "projection leaves no barrier violation".into(),
                ));
            } else {
                checks.push(CheckOutcome::skip("fd_barrier_respected", "no obstacle declared"));
            }
            if let Some((js, o)) = oracle {
                checks.push(oracle_check("fd_matches_oracle", sol.u0(points[js])?, 0.0, o, tol));
            }
            diagnostics.insert("fd_multiplier_mass".into(), sol.total_multiplier_mass());
            diagnostics.insert("fd_barrier_violation".into(), sol.barrier_violation);

            if let Some(twin) = &inst.premium_twin {
                let tobs = require_obstacle(twin)?;
                let plain = solve_obstacle_fd(twin, &tobs, &grid, ObstacleMethod::Projected)?;
                let premium = sol.u0(points[0])? - plain.u0(points[0])?;
                checks.push(CheckOutcome::gate(
                    "constrained_premium_nonnegative",
                    premium >= -1e-8,
                    premium,
                    0.0,
                    "friction can only raise the hedging cost".into(),
                ));
                diagnostics.insert("constrained_premium".into(), premium);
                fd_solutions.push(("reference".into(), plain));
            }
            fd_solutions.insert(0, ("solution".into(), sol));
        }

        SolverKind::Compare => {
            let b = solve_batched(
                spec,
                rc.grid.n_steps,
                points,
                rc.grid.paths_per_point,
                rc.batches,
                rc.seed,
                |bundle| solve_bsde(spec, bundle, &opts),
            )?;
            let grid = fd_grid_from(rc);
            let fd = solve_pde_fd(spec, &grid, rc.theta)?;

            // start-row container for the batch means, shaped like a
            // one-path backward solution so the comparison op can read it
            let starts: Vec<Vec<f64>> = points.iter().map(|x| vec![*x]).collect();
            let mc = BackwardSolution {
                n_points: points.len(),
                paths_per_point: 1,
                n_steps: 0,
                dim: 1,
                initial_points: starts,
                y: b.mean.clone(),
                z: b.z_mean.clone(),
                k: vec![0.0; points.len()],
                coeffs: Vec::new(),
                rank_deficient_steps: Vec::new(),
                max_step_residual: 0.0,
                mode: "plain",
                theta: rc.theta,
                basis: rc.basis.to_spec(),
            };
            let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = 1e-6 * (1.0 + hi.abs());
            let region = if hi > lo { (lo, hi) } else { (lo - pad, hi + pad) };
            let report = feynman_kac_compare(&fd, &mc, &spec.weight, region, Some(&b.se))?;

            checks.push(CheckOutcome::gate(
                "fd_mc_values_close",
                report.u_distance <= tol.compare_rel * report.fd_u_norm,
                report.u_distance,
                tol.compare_rel * report.fd_u_norm,
                "weighted distance between the value fields".into(),
            ));
            checks.push(CheckOutcome::gate(
                "fd_mc_gradients_close",
                report.z_distance <= tol.compare_rel_z * report.fd_z_norm,
                report.z_distance,
                tol.compare_rel_z * report.fd_z_norm,
                "weighted distance between the gradient fields".into(),
            ));
            // The relative floor is field-scaled: deep out of the money both values
            // are near zero and a purely local floor would demand spurious precision.
            let mut fd_max = 0.0f64;
            for x0 in points {
                fd_max = fd_max.max(fd.u0(*x0)?.abs());
            }
            let mut worst_slack = f64::INFINITY;
            for (j, x0) in points.iter().enumerate() {
                let ufd = fd.u0(*x0)?;
                let bound = (tol.se_band * b.se[j])
                    .max(tol.value_rel * (ufd.abs() + 0.1 * fd_max))
                    .max(tol.value_abs);
                worst_slack = worst_slack.min(bound - (b.mean[j] - ufd).abs());
            }
            checks.push(CheckOutcome::gate(
                "fd_mc_start_values_within_band",
                worst_slack >= 0.0,
                worst_slack,
                0.0,
                "every start point agrees within noise or the relative floor".into(),
            ));

            for (j, x0) in points.iter().enumerate() {
                let orc = orc_at(j);
                let mut r = row("bsde", None, Some(*x0), b.mean[j], Some(b.se[j]));
                r.z = Some(b.z_mean[j]);
                r.z_se = Some(b.z_se[j]);
                headline.push(r.against(orc));
                let mut r = row("fd", None, Some(*x0), fd.u0(*x0)?, None);
                r.z = Some(fd.du0(*x0)?);
                headline.push(r.against(orc));
            }
            if let Some((js, o)) = oracle {
                checks.push(oracle_check("headline_matches_oracle", b.mean[js], b.se[js], o, tol));
                checks.push(oracle_check("fd_matches_oracle", fd.u0(points[js])?, 0.0, o, tol));
            }
            diagnostics.insert("compare_u_distance".into(), report.u_distance);
            diagnostics.insert("compare_z_distance".into(), report.z_distance);
            diagnostics.insert("compare_fd_u_norm".into(), report.fd_u_norm);
            diagnostics.insert("compare_fd_z_norm".into(), report.fd_z_norm);
            diagnostics.insert("compare_points".into(), report.n_compared as f64);
            if !report.z_scores.is_empty() {
                let mz = report.z_scores.iter().fold(0.0f64, |a, z| a.max(z.abs()));
                diagnostics.insert("compare_max_z_score".into(), mz);
            }
            fd_solutions.push(("solution".into(), fd));
            if rc.dump_bundle {
                bundle = Some(b.first_bundle);
            }
        }

        SolverKind::DiagnoseNorms => {
            let lattice = NormLattice {
                x_lo: inst.probe_box.0,
                x_hi: inst.probe_box.1,
                n_space: 41,
                n_time: rc.grid.n_steps,
                horizon: spec.horizon,
            };
            let frozen = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0);
            let fr = equivalence_ratio(
                &frozen,
                &spec.weight,
                test_bump,
                &lattice,
                rc.grid.paths_per_point,
                rc.seed,
                "frozen",
            )?;
            checks.push(CheckOutcome::gate(
                "frozen_ratio_unit",
                (fr.ratio - 1.0).abs() <= 1e-6 && fr.se == 0.0,
                (fr.ratio - 1.0).abs(),
                1e-6,
                "a frozen flow changes nothing, with zero variance".into(),
            ));
            headline.push(row("diagnose-norms/frozen", None, None, fr.ratio, Some(fr.se)).against(Some(1.0)));

            let fl = equivalence_ratio(
                &spec.diffusion,
                &spec.weight,
                test_bump,
                &lattice,
                rc.grid.paths_per_point,
                rc.seed,
                "flow",
            )?;
            let kernel = constant_sigma(&spec.diffusion, inst.probe_box, spec.horizon)
                .map(|s| kernel_ratio_oracle(&spec.weight, &lattice, s));
            match kernel {
                Some(orc) if fl.se > 0.0 => {
                    checks.push(CheckOutcome::gate(
                        "flow_ratio_matches_kernel_quadrature",
                        (fl.ratio - orc).abs() <= tol.se_band * fl.se,
                        (fl.ratio - orc).abs(),
                        tol.se_band * fl.se,
                        format!("ratio {} vs kernel quadrature {orc}", fl.ratio),
                    ));
                    diagnostics.insert("kernel_oracle_ratio".into(), orc);
                }
                _ => checks.push(CheckOutcome::skip(
                    "flow_ratio_matches_kernel_quadrature",
                    "no closed-form kernel for this flow",
                )),
            }
            headline.push(row("diagnose-norms/flow", None, None, fl.ratio, Some(fl.se)).against(kernel));
            diagnostics.insert("norm_plain".into(), fl.plain);
            diagnostics.insert("norm_composed".into(), fl.composed);

            let sample = FlowSample {
                x_lo: inst.probe_box.0,
                x_hi: inst.probe_box.1,
                n_points: 81,
                paths_per_point: 256,
                n_steps: rc.grid.n_steps,
                horizon: spec.horizon,
                seed: rc.seed,
                bins: 16,
                report_lo: inst.probe_box.0,
                report_hi: inst.probe_box.1,
            };
            let flow = flow_ratio_estimate(&spec.diffusion, &spec.weight, &sample)?;
            checks.push(CheckOutcome::gate(
                "flow_density_ratio_positive",
                flow.min > 0.0 && flow.max.is_finite(),
                flow.min,
                0.0,
                "pushforward density stays positive on reached bins".into(),
            ));
            diagnostics.insert("flow_ratio_min".into(), flow.min);
            diagnostics.insert("flow_ratio_max".into(), flow.max);
        }
    }

    let summary = RunSummary {
        scenario: rc.scenario_label().to_string(),
        solver: rc.solver,
        oracle_label: inst.oracle.as_ref().map(|o| o.label.clone()),
        headline,
        checks,
        diagnostics,
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
        config: rc.clone(),
    };
    Ok(RunOutcome {
        summary,
        convergence,
        measure,
        fd_solutions,
        bundle,
    })
}

/// The diagnostic test function: a Gaussian bump with mild time growth,
/// strictly positive so the plain norm never degenerates.
fn test_bump(t: f64, x: f64) -> f64 {
    (1.0 + 0.5 * t) * (-0.5 * x * x).exp()
}

/// Mean of [`test_bump`] under an additive Gaussian displacement of
/// variance `var`: the exact kernel convolution.
fn test_bump_smoothed(t: f64, x: f64, var: f64) -> f64 {
    let v = 1.0 + var;
    (1.0 + 0.5 * t) * (-(x * x) / (2.0 * v)).exp() / v.sqrt()
}

/// Detects a driftless flow with constant diffusion by sampling the
/// coefficients over the box; returns the constant when it applies.
fn constant_sigma(diffusion: &DiffusionSpec, box_: (f64, f64), horizon: f64) -> Option<f64> {
    let mut out = [0.0f64];
    let mut sig: Option<f64> = None;
    for i in 0..5 {
        let t = horizon * i as f64 / 4.0;
        for k in 0..7 {
            let x = box_.0 + (box_.1 - box_.0) * k as f64 / 6.0;
            diffusion.drift_at(t, &[x], &mut out);
            if out[0] != 0.0 {
                return None;
            }
            diffusion.diffusion_at(t, &[x], &mut out);
            match sig {
                None => sig = Some(out[0]),
                Some(s) if out[0] == s => {}
                _ => return None,
            }
        }
    }
    sig.filter(|s| *s > 0.0)
}

/// Lattice quadrature of the flow-composed norm over the plain norm for a
/// driftless constant-sigma flow, using the same trapezoid rule as the
/// sampled estimate, so the two differ only by Monte Carlo noise.
fn kernel_ratio_oracle(weight: &WeightSpec, lattice: &NormLattice, sigma: f64) -> f64 {
    let xs = lattice.nodes();
    let dx = (lattice.x_hi - lattice.x_lo) / (lattice.n_space - 1) as f64;
    let dt = lattice.horizon / lattice.n_time as f64;
    let mut plain = 0.0;
    let mut composed = 0.0;
    for i in 0..=lattice.n_time {
        let t = i as f64 * dt;
        let wt = if i == 0 || i == lattice.n_time { 0.5 * dt } else { dt };
        for (k, x) in xs.iter().enumerate() {
            let wx = if k == 0 || k + 1 == lattice.n_space {
                0.5 * dx
            } else {
                dx
            };
            let w = wt * wx * weight.rho(&[*x]);
            plain += w * test_bump(t, *x);
            composed += w * test_bump_smoothed(t, *x, sigma * sigma * t);
        }
    }
    composed / plain
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_statistics_collapse_for_identical_values() {
        let (m, s) = mean_se(&[2.5, 2.5, 2.5, 2.5]);
        assert_eq!(m, 2.5);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn batch_statistics_match_the_direct_formulas() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // sample variance 5/3, four batches
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kernel_oracle_is_unity_at_zero_variance() {
        let lattice = NormLattice {
            x_lo: -2.0,
            x_hi: 2.0,
            n_space: 41,
            n_time: 10,
            horizon: 1.0,
        };
        let w = WeightSpec::Polynomial { p: 3.0 };
        // sigma -> 0 collapses the kernel onto the identity
        let r = kernel_ratio_oracle(&w, &lattice, 1e-9);
        assert!((r - 1.0).abs() < 1e-12, "ratio {r}");
        // widening the kernel spreads mass past the bump's peak, so the
        // composed integral exceeds the plain one away from the peak but the
        // ratio stays order one
        let r1 = kernel_ratio_oracle(&w, &lattice, 1.0);
        assert!(r1 > 0.5 && r1 < 2.0, "ratio {r1}");
    }

    #[test]
    fn constant_coefficients_are_recognized() {
        let brown = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0);
        assert_eq!(constant_sigma(&brown, (-2.0, 2.0), 1.0), Some(1.0));
        let gbm = DiffusionSpec::scalar(|_, x| 0.05 * x, |_, x| 0.2 * x, 0.05, 0.2);
        assert_eq!(constant_sigma(&gbm, (1.0, 2.0), 1.0), None);
        let state_dep = DiffusionSpec::scalar(|_, _| 0.0, |_, x| 1.0 + 0.1 * x, 0.0, 0.1);
        assert_eq!(constant_sigma(&state_dep, (-2.0, 2.0), 1.0), None);
    }
}
