//! JSON experiment configs: the raw form users write, resolution against
//! scenario defaults, and the fully materialized echo that goes into
//! summary.json so any run can be reproduced from its own summary.

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Raw config. Every field is optional at the schema level; resolution
/// enforces that a scenario or an inline problem is named and that a seed is
/// present (no implicit nondeterminism).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Option<String>,
    pub problem: Option<ProblemConfig>,
    pub solver: Option<SolverKind>,
    pub grid: Option<GridConfig>,
    pub fd: Option<FdConfig>,
    pub basis: Option<BasisConfig>,
    pub penalty_schedule: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub batches: Option<usize>,
    pub measure_bins: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    pub tolerances: Option<ToleranceConfig>,
    pub dump_bundle: Option<bool>,
}

fn one() -> f64 {
    1.0
}

fn default_weight() -> WeightConfig {
    WeightConfig::Polynomial { p: 4.0 }
}

/// Inline problem definition from expression strings. Drift, diffusion, and
/// obstacle are expressions in `t, x`; the terminal condition in `x`; the
/// driver in `t, x, y, z`. The declared constants are claims checked by
/// `validate`, exactly like native scenario definitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: String,
    pub diffusion: String,
    pub driver: String,
    pub terminal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<String>,
    pub horizon: f64,
    /// One-sided monotonicity constant of the driver in y.
    #[serde(default)]
    pub monotonicity: f64,
    #[serde(default)]
    pub z_lipschitz: f64,
    #[serde(default = "one")]
    pub drift_lipschitz: f64,
    #[serde(default = "one")]
    pub diffusion_lipschitz: f64,
    #[serde(default)]
    pub driver_growth: Growth,
    #[serde(default)]
    pub terminal_growth: Growth,
    #[serde(default)]
    pub obstacle_growth: Growth,
    #[serde(default = "default_weight")]
    pub weight: WeightConfig,
}

/// Growth envelope kappa (1 + r^beta).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    pub kappa: f64,
    pub beta: f64,
}

impl Default for Growth {
    fn default() -> Self {
        Growth {
            kappa: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    Polynomial { p: f64 },
    Exponential { alpha: f64 },
}

impl WeightConfig {
    pub fn to_spec(self) -> bsde_core::WeightSpec {
        match self {
            WeightConfig::Polynomial { p } => bsde_core::WeightSpec::Polynomial { p },
            WeightConfig::Exponential { alpha } => bsde_core::WeightSpec::Exponential { alpha },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Bsde,
    RbsdeReflected,
    RbsdePenalized,
    Fd,
    Compare,
    DiagnoseNorms,
}

impl SolverKind {
    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Bsde => "bsde",
            SolverKind::RbsdeReflected => "rbsde-reflected",
            SolverKind::RbsdePenalized => "rbsde-penalized",
            SolverKind::Fd => "fd",
            SolverKind::Compare => "compare",
            SolverKind::DiagnoseNorms => "diagnose-norms",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_steps: Option<usize>,
    pub paths_per_point: Option<usize>,
    pub initial_points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub n_nodes: Option<usize>,
    pub n_steps: Option<usize>,
    pub rannacher_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    Polynomial { degree: usize },
    PiecewiseConstant { bins: usize },
    PiecewiseLinear { bins: usize },
}

impl BasisConfig {
    pub fn to_spec(self) -> bsde_core::BasisSpec {
        match self {
            BasisConfig::Polynomial { degree } => bsde_core::BasisSpec::Polynomial {
                degree,
                domain: None,
            },
            BasisConfig::PiecewiseConstant { bins } => bsde_core::BasisSpec::PiecewiseConstant {
                bins,
                domain: None,
            },
            BasisConfig::PiecewiseLinear { bins } => bsde_core::BasisSpec::PiecewiseLinear {
                bins,
                domain: None,
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub value_abs: Option<f64>,
    pub value_rel: Option<f64>,
    pub se_band: Option<f64>,
    pub measure_identity: Option<f64>,
    pub contact_mass: Option<f64>,
    pub compare_rel: Option<f64>,
    pub compare_rel_z: Option<f64>,
}

/// Tolerances with defaults materialized. `value_abs`/`value_rel`/`se_band`
/// gate oracle comparisons as |estimate - oracle| <= max(abs, rel |oracle|,
/// band * se); the rest are the invariant-check bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub value_abs: f64,
    pub value_rel: f64,
    pub se_band: f64,
    pub measure_identity: f64,
    /// Minimum fraction of reflection mass that must sit in contact cells.
    pub contact_mass: f64,
    /// Weighted relative distance allowed between fd and MC value fields.
    pub compare_rel: f64,
    pub compare_rel_z: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            value_abs: 1e-3,
            value_rel: 1e-2,
            se_band: 3.0,
            measure_identity: 1e-10,
            contact_mass: 0.95,
            compare_rel: 1e-2,
            compare_rel_z: 5e-2,
        }
    }
}

/// Grid parameters with defaults materialized.
#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub n_steps: usize,
    pub paths_per_point: usize,
    pub initial_points: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdEcho {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub rannacher_steps: usize,
}

/// Per-scenario defaults; the registry owns one of these per entry and
/// resolution fills whatever the config leaves out.
#[derive(Debug, Clone)]
pub struct ScenarioDefaults {
    pub solver: SolverKind,
    pub n_steps: usize,
    pub paths_per_point: usize,
    pub initial_points: Vec<f64>,
    pub fd: FdEcho,
    pub theta: f64,
    pub penalty_schedule: Vec<f64>,
    pub basis: BasisConfig,
}

/// Fully resolved configuration. Serializes to the same schema that
/// `ExperimentConfig` reads, so the `config` object inside summary.json can
/// be fed back to `run` verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    pub solver: SolverKind,
    pub grid: GridEcho,
    pub fd: FdEcho,
    pub basis: BasisConfig,
    pub penalty_schedule: Vec<f64>,
    pub theta: f64,
    pub batches: usize,
    pub measure_bins: usize,
    pub seed: u64,
    pub output_dir: String,
    pub tolerances: Tolerances,
    pub dump_bundle: bool,
}

impl ResolvedConfig {
    pub fn scenario_label(&self) -> &str {
        self.scenario.as_deref().unwrap_or("inline")
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Merges the raw config with scenario defaults (when a scenario was named)
/// and validates the result. `env_output_dir` is the value of the output
/// directory override variable, which wins over the config field.
pub fn resolve(
    cfg: ExperimentConfig,
    defaults: Option<&ScenarioDefaults>,
    env_output_dir: Option<String>,
) -> Result<ResolvedConfig, CliError> {
    let seed = cfg.seed.ok_or_else(|| bad("seed required"))?;
    match (&cfg.scenario, &cfg.problem) {
        (Some(_), Some(_)) => {
            return Err(bad(
                "give either a scenario name or an inline problem, not both",
            ))
        }
        (None, None) => return Err(bad("scenario or inline problem required")),
        _ => {}
    }
    if cfg.scenario.is_some() != defaults.is_some() {
        return Err(bad("scenario defaults out of step with the config"));
    }

    let grid = cfg.grid.unwrap_or_default();
    let initial_points = match (
        grid.initial_points,
        defaults.map(|d| d.initial_points.clone()),
    ) {
        (Some(p), _) => p,
        (None, Some(p)) => p,
        (None, None) => return Err(bad("grid.initial_points required for inline problems")),
    };
    if initial_points.is_empty() || initial_points.iter().any(|x| !x.is_finite()) {
        return Err(bad("initial points must be a nonempty list of finite numbers"));
    }

    let n_steps = grid
        .n_steps
        .or(defaults.map(|d| d.n_steps))
        .unwrap_or(50);
    if n_steps == 0 {
        return Err(bad("grid.n_steps must be at least 1"));
    }
    let paths_per_point = grid
        .paths_per_point
        .or(defaults.map(|d| d.paths_per_point))
        .unwrap_or(10_000);
    let batches = cfg.batches.unwrap_or(8);
    if batches == 0 {
        return Err(bad("batches must be at least 1"));
    }
    if paths_per_point < batches {
        return Err(bad(format!(
            "paths_per_point {paths_per_point} is smaller than the batch count {batches}"
        )));
    }

    let solver = cfg
        .solver
        .or(defaults.map(|d| d.solver))
        .unwrap_or(SolverKind::Bsde);

    let theta = cfg
        .theta
        .or(defaults.map(|d| d.theta))
        .unwrap_or(0.5);
    if !(0.5..=1.0).contains(&theta) {
        return Err(bad(format!("theta {theta} must lie in [0.5, 1]")));
    }

    let penalty_schedule = cfg
        .penalty_schedule
        .or(defaults.map(|d| d.penalty_schedule.clone()))
        .unwrap_or_else(|| vec![10.0, 100.0, 1000.0]);
    if penalty_schedule.is_empty()
        || penalty_schedule.iter().any(|n| !n.is_finite() || *n <= 0.0)
        || penalty_schedule.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(bad(
            "penalty_schedule must be a strictly increasing list of positive levels",
        ));
    }

    // Fallback fd box for inline problems: a window around the start points.
    let fallback_fd = || {
        let lo = initial_points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = initial_points
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let pad = 1.0 + 0.5 * (hi - lo).abs() + 0.1 * hi.abs().max(lo.abs());
        FdEcho {
            x_lo: lo - pad,
            x_hi: hi + pad,
            n_nodes: 201,
            n_steps: 200,
            rannacher_steps: 2,
        }
    };
    let fd_base = defaults.map(|d| d.fd.clone()).unwrap_or_else(fallback_fd);
    let fd_cfg = cfg.fd.unwrap_or_default();
    let fd = FdEcho {
        x_lo: fd_cfg.x_lo.unwrap_or(fd_base.x_lo),
        x_hi: fd_cfg.x_hi.unwrap_or(fd_base.x_hi),
        n_nodes: fd_cfg.n_nodes.unwrap_or(fd_base.n_nodes),
        n_steps: fd_cfg.n_steps.unwrap_or(fd_base.n_steps),
        rannacher_steps: fd_cfg.rannacher_steps.unwrap_or(fd_base.rannacher_steps),
    };
    if !(fd.x_hi > fd.x_lo) || fd.n_nodes < 3 || fd.n_steps == 0 {
        return Err(bad("fd grid needs x_hi > x_lo, at least 3 nodes and 1 step"));
    }

    let t = cfg.tolerances.unwrap_or_default();
    let base = Tolerances::default();
    let tolerances = Tolerances {
        value_abs: t.value_abs.unwrap_or(base.value_abs),
        value_rel: t.value_rel.unwrap_or(base.value_rel),
        se_band: t.se_band.unwrap_or(base.se_band),
        measure_identity: t.measure_identity.unwrap_or(base.measure_identity),
        contact_mass: t.contact_mass.unwrap_or(base.contact_mass),
        compare_rel: t.compare_rel.unwrap_or(base.compare_rel),
        compare_rel_z: t.compare_rel_z.unwrap_or(base.compare_rel_z),
    };
    for (name, v) in [
        ("value_abs", tolerances.value_abs),
        ("value_rel", tolerances.value_rel),
        ("se_band", tolerances.se_band),
        ("measure_identity", tolerances.measure_identity),
        ("compare_rel", tolerances.compare_rel),
        ("compare_rel_z", tolerances.compare_rel_z),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(bad(format!("tolerances.{name} must be finite and positive")));
        }
    }
    if !(0.0..=1.0).contains(&tolerances.contact_mass) {
        return Err(bad("tolerances.contact_mass must lie in [0, 1]"));
    }

    let output_dir = env_output_dir
        .or(cfg.output_dir)
        .unwrap_or_else(|| ".".into());

    Ok(ResolvedConfig {
        scenario: cfg.scenario,
        problem: cfg.problem,
        solver,
        grid: GridEcho {
            n_steps,
            paths_per_point,
            initial_points,
        },
        fd,
        basis: cfg
            .basis
            .or(defaults.map(|d| d.basis))
            .unwrap_or(BasisConfig::Polynomial { degree: 4 }),
        penalty_schedule,
        theta,
        batches: cfg.batches.unwrap_or(8),
        // fine enough that exercise-boundary cells are not diluted by
        // non-contact visits
        measure_bins: cfg.measure_bins.unwrap_or(160).max(1),
        seed,
        output_dir,
        tolerances,
        dump_bundle: cfg.dump_bundle.unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(json: &str) -> Result<ResolvedConfig, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(json).expect("schema");
        resolve(cfg, None, None)
    }

    #[test]
    fn missing_seed_is_the_documented_message() {
        let err = minimal(r#"{"problem": {"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0}}"#)
            .unwrap_err();
        assert_eq!(err.to_string(), "seed required");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"seed": 1, "wat": 2}"#);
        assert!(r.is_err());
    }

    #[test]
    fn scenario_and_problem_together_are_rejected() {
        let err = minimal(
            r#"{"seed":1,"scenario":"x","problem":{"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not both"));
    }

    #[test]
    fn inline_problems_need_start_points() {
        let err = minimal(
            r#"{"seed":1,"problem":{"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("initial_points"));
    }

    #[test]
    fn defaults_materialize_and_echo_reparses() {
        let rc = minimal(
            r#"{"seed":7,"problem":{"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0},"grid":{"initial_points":[0.0]}}"#,
        )
        .unwrap();
        assert_eq!(rc.grid.n_steps, 50);
        assert_eq!(rc.batches, 8);
        assert_eq!(rc.theta, 0.5);
        assert_eq!(rc.tolerances.se_band, 3.0);

        // the echo is itself a valid config resolving to the same values
        let echo = serde_json::to_string(&rc).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&echo).expect("echo schema");
        let rc2 = resolve(back, None, None).unwrap();
        assert_eq!(serde_json::to_string(&rc2).unwrap(), echo);
    }

    #[test]
    fn env_override_wins_over_the_config_field() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"seed":1,"problem":{"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0},"grid":{"initial_points":[0.0]},"output_dir":"from_config"}"#,
        )
        .unwrap();
        let rc = resolve(cfg, None, Some("from_env".into())).unwrap();
        assert_eq!(rc.output_dir, "from_env");
    }

    #[test]
    fn degenerate_schedules_are_rejected() {
        for sched in ["[]", "[0.0]", "[10.0, 10.0]", "[100.0, 10.0]"] {
            let json = format!(
                r#"{{"seed":1,"problem":{{"drift":"0","diffusion":"1","driver":"0-y","terminal":"1","horizon":1.0}},"grid":{{"initial_points":[0.0]}},"penalty_schedule":{sched}}}"#
            );
            assert!(minimal(&json).is_err(), "schedule {sched} accepted");
        }
    }
}
