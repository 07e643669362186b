//! Built-in scenarios with pinned coefficients. The registry backs
//! `list-scenarios` and configs that name a scenario; market parameters for
//! the option scenarios live here and nowhere else.

use bsde_core::expr::Expr;
use bsde_core::{
    DiffusionSpec, DriverSpec, ObstacleSpec, ProblemSpec, TerminalSpec, WeightSpec,
};

use crate::config::{BasisConfig, FdEcho, ProblemConfig, ResolvedConfig, ScenarioDefaults, SolverKind};
use crate::{oracles, CliError};

pub struct Scenario {
    pub name: &'static str,
    pub blurb: &'static str,
    pub build: fn() -> ProblemSpec,
    pub defaults: fn() -> ScenarioDefaults,
    /// Box the assumption validator probes over.
    pub probe_box: (f64, f64),
    pub oracle: Option<OracleRef>,
    /// Same contract priced without the market friction, for premium
    /// reporting.
    pub premium_twin: Option<fn() -> ProblemSpec>,
}

#[derive(Clone, Copy)]
pub struct OracleRef {
    pub label: &'static str,
    pub eval: fn() -> f64,
    /// Start point the reference value belongs to.
    pub at: f64,
}

fn fd_echo(x_lo: f64, x_hi: f64, n_nodes: usize, n_steps: usize, rannacher: usize) -> FdEcho {
    FdEcho {
        x_lo,
        x_hi,
        n_nodes,
        n_steps,
        rannacher_steps: rannacher,
    }
}

fn linear_driver() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, x| 0.05 * x, |_, x| 0.2 * x, 0.05, 0.2),
        DriverSpec::scalar(|_t, _x, y, _z| -y, 0.0, 0.0, 1.0, 1.0),
        TerminalSpec::scalar(|_| 1.0, 1.0, 0.0),
        None,
        WeightSpec::Polynomial { p: 4.0 },
        1.0,
    )
}

fn cubic_driver() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0),
        DriverSpec::scalar(|_t, _x, y, _z| -y * y * y, 0.0, 0.0, 1.0, 3.0),
        TerminalSpec::scalar(|_| 1.0, 1.0, 0.0),
        None,
        WeightSpec::Polynomial { p: 4.0 },
        1.0,
    )
}

fn bs_european_call() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, x| 0.05 * x, |_, x| 0.2 * x, 0.05, 0.2),
        DriverSpec::scalar(|_t, _x, y, _z| -0.05 * y, 0.0, 0.0, 0.1, 1.0),
        TerminalSpec::scalar(|x| (x - 100.0).max(0.0), 100.0, 1.0),
        None,
        WeightSpec::Polynomial { p: 6.0 },
        1.0,
    )
}

fn american_put() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, x| 0.06 * x, |_, x| 0.4 * x, 0.06, 0.4),
        DriverSpec::scalar(|_t, _x, y, _z| -0.06 * y, 0.0, 0.0, 0.1, 1.0),
        TerminalSpec::scalar(|x| (100.0 - x).max(0.0), 100.0, 1.0),
        Some(ObstacleSpec::scalar(|_t, x| (100.0 - x).max(0.0), 100.0, 1.0)),
        WeightSpec::Polynomial { p: 6.0 },
        0.5,
    )
}

/// American put where borrowing costs more than the riskless rate: the
/// hedger pays `rb` on negative cash, which adds the concave friction term
/// `(rb - r)(y - z/vol)^-` to the pricing driver and makes it z-Lipschitz.
fn american_put_constrained() -> ProblemSpec {
    let (r, rb, vol) = (0.06, 0.10, 0.4);
    ProblemSpec::new(
        DiffusionSpec::scalar(move |_, x| r * x, move |_, x| vol * x, r, vol),
        DriverSpec::scalar(
            move |_t, _x, y, z| -r * y + (rb - r) * (z / vol - y).max(0.0),
            0.0,
            (rb - r) / vol,
            rb,
            1.0,
        ),
        TerminalSpec::scalar(|x| (100.0 - x).max(0.0), 100.0, 1.0),
        Some(ObstacleSpec::scalar(|_t, x| (100.0 - x).max(0.0), 100.0, 1.0)),
        WeightSpec::Polynomial { p: 6.0 },
        0.5,
    )
}

fn heat_equation() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, _| 0.0, |_, _| std::f64::consts::SQRT_2, 0.0, 0.0),
        DriverSpec::scalar(|_t, _x, _y, _z| 0.0, 0.0, 0.0, 0.1, 1.0),
        TerminalSpec::scalar(|x| (-0.5 * x * x).exp(), 1.0, 0.0),
        None,
        WeightSpec::Polynomial { p: 4.0 },
        1.0,
    )
}

fn norm_diagnostics() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0),
        DriverSpec::scalar(|_t, _x, _y, _z| 0.0, 0.0, 0.0, 0.1, 1.0),
        TerminalSpec::scalar(|x| (-0.5 * x * x).exp(), 1.0, 0.0),
        None,
        WeightSpec::Polynomial { p: 3.0 },
        1.0,
    )
}

fn linear_z_driver() -> ProblemSpec {
    ProblemSpec::new(
        DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0),
        DriverSpec::scalar(|_t, _x, y, z| -y + 0.1 * z, 0.0, 0.1, 1.0, 1.0),
        TerminalSpec::scalar(|x| x, 1.0, 1.0),
        None,
        WeightSpec::Polynomial { p: 4.0 },
        1.0,
    )
}

pub fn all() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "linear_driver",
            blurb: "f = -y with flat terminal data on a geometric diffusion; closed form e^{-T}",
            build: linear_driver,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Bsde,
                n_steps: 50,
                paths_per_point: 20_000,
                initial_points: vec![1.0],
                fd: fd_echo(0.01, 8.0, 201, 200, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::Polynomial { degree: 4 },
            },
            probe_box: (0.25, 4.0),
            oracle: Some(OracleRef {
                label: "exponential decay closed form",
                eval: || (-1.0f64).exp(),
                at: 1.0,
            }),
            premium_twin: None,
        },
        Scenario {
            name: "cubic_driver",
            blurb: "f = -y^3, frozen paths; monotone but not Lipschitz, closed form 1/sqrt(1+2T)",
            build: cubic_driver,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Bsde,
                n_steps: 50,
                paths_per_point: 16,
                initial_points: vec![0.0],
                fd: fd_echo(-2.0, 2.0, 201, 2000, 0),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::Polynomial { degree: 4 },
            },
            probe_box: (-1.0, 1.0),
            oracle: Some(OracleRef {
                label: "separable decay closed form",
                eval: || 1.0 / 3.0f64.sqrt(),
                at: 0.0,
            }),
            premium_twin: None,
        },
        Scenario {
            name: "bs_european_call",
            blurb: "European call, r=0.05 vol=0.2 strike=100 T=1; Monte Carlo against fd and the lognormal closed form",
            build: bs_european_call,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Compare,
                n_steps: 50,
                paths_per_point: 100_000,
                initial_points: (0..13).map(|k| 70.0 + 5.0 * k as f64).collect(),
                fd: fd_echo(0.0, 400.0, 400, 400, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                // hats keep the pooled regression unbiased at the strike
                basis: BasisConfig::PiecewiseLinear { bins: 128 },
            },
            probe_box: (40.0, 250.0),
            oracle: Some(OracleRef {
                label: "lognormal closed form",
                eval: || oracles::black_scholes_call(100.0, 100.0, 0.05, 0.2, 1.0),
                at: 100.0,
            }),
            premium_twin: None,
        },
        Scenario {
            name: "american_put",
            blurb: "American put, r=0.06 vol=0.4 strike=100 T=0.5; reflected scheme against a binomial tree",
            build: american_put,
            defaults: || ScenarioDefaults {
                solver: SolverKind::RbsdeReflected,
                n_steps: 50,
                paths_per_point: 100_000,
                initial_points: vec![100.0],
                fd: fd_echo(0.0, 400.0, 401, 800, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                // hat functions track the payoff kink; global polynomials
                // bias the iterated value fits upward here
                basis: BasisConfig::PiecewiseLinear { bins: 64 },
            },
            probe_box: (40.0, 250.0),
            oracle: Some(OracleRef {
                label: "binomial tree (2000 steps)",
                eval: || oracles::binomial_american_put(100.0, 100.0, 0.06, 0.4, 0.5, 2000),
                at: 100.0,
            }),
            premium_twin: None,
        },
        Scenario {
            name: "american_put_constrained",
            blurb: "American put with borrowing rate 0.10 above the riskless 0.06; reports the premium over the unconstrained price",
            build: american_put_constrained,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Fd,
                n_steps: 50,
                paths_per_point: 20_000,
                initial_points: vec![100.0],
                fd: fd_echo(0.0, 400.0, 401, 800, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::PiecewiseLinear { bins: 64 },
            },
            probe_box: (40.0, 250.0),
            oracle: Some(OracleRef {
                label: "binomial tree (2000 steps), frictionless",
                eval: || oracles::binomial_american_put(100.0, 100.0, 0.06, 0.4, 0.5, 2000),
                at: 100.0,
            }),
            premium_twin: Some(american_put),
        },
        Scenario {
            name: "heat_equation",
            blurb: "sigma^2 = 2 with a Gaussian bump terminal; kernel convolution closed form",
            build: heat_equation,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Fd,
                n_steps: 50,
                paths_per_point: 10_000,
                initial_points: vec![0.0],
                fd: fd_echo(-8.0, 8.0, 401, 400, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::Polynomial { degree: 4 },
            },
            probe_box: (-5.0, 5.0),
            oracle: Some(OracleRef {
                label: "Gaussian kernel convolution",
                eval: || oracles::heat_bump(0.0, 1.0),
                at: 0.0,
            }),
            premium_twin: None,
        },
        Scenario {
            name: "norm_diagnostics",
            blurb: "weighted-norm equivalence and flow-density diagnostics on a Brownian flow",
            build: norm_diagnostics,
            defaults: || ScenarioDefaults {
                solver: SolverKind::DiagnoseNorms,
                n_steps: 20,
                paths_per_point: 2_000,
                initial_points: vec![0.0],
                fd: fd_echo(-2.0, 2.0, 101, 100, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::Polynomial { degree: 4 },
            },
            probe_box: (-2.0, 2.0),
            oracle: None,
            premium_twin: None,
        },
        Scenario {
            name: "linear_z_driver",
            blurb: "f = -y + 0.1 z on a Brownian flow with linear terminal data; drift-shift closed form",
            build: linear_z_driver,
            defaults: || ScenarioDefaults {
                solver: SolverKind::Bsde,
                n_steps: 50,
                paths_per_point: 20_000,
                initial_points: vec![0.0],
                fd: fd_echo(-6.0, 6.0, 201, 200, 2),
                theta: 0.5,
                penalty_schedule: vec![10.0, 100.0, 1000.0],
                basis: BasisConfig::Polynomial { degree: 4 },
            },
            probe_box: (-2.0, 2.0),
            oracle: Some(OracleRef {
                label: "drift-shift closed form",
                eval: || 0.1 * (-1.0f64).exp(),
                at: 0.0,
            }),
            premium_twin: None,
        },
    ]
}

pub fn find(name: &str) -> Option<Scenario> {
    all().into_iter().find(|s| s.name == name)
}

pub fn known_names() -> String {
    all()
        .iter()
        .map(|s| s.name)
        .collect::<Vec<_>>()
        .join(", ")
}

/// A reference value for one start point.
pub struct OracleInstance {
    pub label: String,
    pub value: f64,
    pub at: f64,
}

/// Everything the runner needs beyond the resolved config.
pub struct Instance {
    pub spec: ProblemSpec,
    pub probe_box: (f64, f64),
    pub oracle: Option<OracleInstance>,
    pub premium_twin: Option<ProblemSpec>,
}

/// Builds the problem a resolved config refers to, either from the registry
/// or from the inline expressions.
pub fn instantiate(rc: &ResolvedConfig) -> Result<Instance, CliError> {
    let instance = if let Some(name) = &rc.scenario {
        let s = find(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown scenario \"{name}\"; known scenarios: {}",
                known_names()
            ))
        })?;
        Instance {
            spec: (s.build)(),
            probe_box: s.probe_box,
            oracle: s.oracle.map(|o| OracleInstance {
                label: o.label.to_string(),
                value: (o.eval)(),
                at: o.at,
            }),
            premium_twin: s.premium_twin.map(|b| b()),
        }
    } else {
        let p = rc
            .problem
            .as_ref()
            .ok_or_else(|| CliError::Config("scenario or inline problem required".into()))?;
        let lo = rc.grid.initial_points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rc
            .grid
            .initial_points
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let pad = 1.0 + 0.25 * (hi - lo);
        Instance {
            spec: build_inline(p)?,
            probe_box: (lo - pad, hi + pad),
            oracle: None,
            premium_twin: None,
        }
    };
    if rc.solver == SolverKind::Compare && instance.spec.obstacle.is_some() {
        return Err(CliError::Config(
            "compare runs solve unconstrained problems; drop the obstacle or pick an rbsde solver"
                .into(),
        ));
    }
    Ok(instance)
}

fn parse(label: &str, src: &str, vars: &[&str]) -> Result<Expr, CliError> {
    Expr::parse(src, vars).map_err(|e| CliError::Config(format!("{label}: {e}")))
}

fn build_inline(p: &ProblemConfig) -> Result<ProblemSpec, CliError> {
    if !(p.horizon > 0.0) || !p.horizon.is_finite() {
        return Err(CliError::Config("horizon must be positive and finite".into()));
    }
    let b = parse("drift", &p.drift, &["t", "x"])?;
    let s = parse("diffusion", &p.diffusion, &["t", "x"])?;
    let f = parse("driver", &p.driver, &["t", "x", "y", "z"])?;
    let g = parse("terminal", &p.terminal, &["x"])?;
    let h = p
        .obstacle
        .as_ref()
        .map(|src| parse("obstacle", src, &["t", "x"]))
        .transpose()?;

    let diffusion = DiffusionSpec::scalar(
        move |t, x| b.eval(&[t, x]),
        move |t, x| s.eval(&[t, x]),
        p.drift_lipschitz,
        p.diffusion_lipschitz,
    );
    let driver = DriverSpec::scalar(
        move |t, x, y, z| f.eval(&[t, x, y, z]),
        p.monotonicity,
        p.z_lipschitz,
        p.driver_growth.kappa,
        p.driver_growth.beta,
    );
    let terminal = TerminalSpec::scalar(
        move |x| g.eval(&[x]),
        p.terminal_growth.kappa,
        p.terminal_growth.beta,
    );
    let obstacle = h.map(|e| {
        ObstacleSpec::scalar(
            move |t, x| e.eval(&[t, x]),
            p.obstacle_growth.kappa,
            p.obstacle_growth.beta,
        )
    });
    Ok(ProblemSpec::new(
        diffusion,
        driver,
        terminal,
        obstacle,
        p.weight.to_spec(),
        p.horizon,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsde_core::model::validate_problem;
    use bsde_core::ProbePlan;
    use std::collections::HashSet;

    #[test]
    fn registry_names_are_unique_and_complete() {
        let names: Vec<&str> = all().iter().map(|s| s.name).collect();
        let set: HashSet<&str> = names.iter().cloned().collect();
        assert_eq!(set.len(), names.len(), "duplicate scenario names");
        for required in [
            "linear_driver",
            "cubic_driver",
            "bs_european_call",
            "american_put",
            "american_put_constrained",
            "heat_equation",
            "norm_diagnostics",
        ] {
            assert!(set.contains(required), "missing {required}");
        }
    }

    #[test]
    fn every_scenario_passes_its_own_validation() {
        for s in all() {
            let spec = (s.build)();
            let plan = ProbePlan::over_box(vec![s.probe_box.0], vec![s.probe_box.1]);
            let report = validate_problem(&spec, &plan).expect(s.name);
            assert!(
                report.passed,
                "{} failed: {:?}",
                s.name,
                report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| &c.name)
                    .collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn oracles_are_finite_and_defaults_are_runnable() {
        for s in all() {
            if let Some(o) = s.oracle {
                let v = (o.eval)();
                assert!(v.is_finite(), "{} oracle", s.name);
            }
            let d = (s.defaults)();
            assert!(d.paths_per_point >= 8, "{}", s.name);
            assert!(!d.initial_points.is_empty(), "{}", s.name);
            assert!(d.fd.x_hi > d.fd.x_lo, "{}", s.name);
        }
    }

    #[test]
    fn inline_expressions_build_a_working_problem() {
        let p: ProblemConfig = serde_json::from_str(
            r#"{
                "drift": "0.05*x", "diffusion": "0.2*x",
                "driver": "0 - y", "terminal": "max(x - 100, 0)",
                "horizon": 1.0, "terminal_growth": {"kappa": 100.0, "beta": 1.0}
            }"#,
        )
        .unwrap();
        let spec = build_inline(&p).unwrap();
        assert_eq!(spec.dim(), 1);
        assert_eq!(spec.terminal.eval(&[130.0]), 30.0);
        assert_eq!(spec.driver.eval(0.0, &[1.0], 2.0, &[0.0]), -2.0);
    }

    #[test]
    fn expression_errors_name_the_offending_field() {
        let p: ProblemConfig = serde_json::from_str(
            r#"{"drift": "0", "diffusion": "1", "driver": "y +", "terminal": "1", "horizon": 1.0}"#,
        )
        .unwrap();
        let err = build_inline(&p).unwrap_err();
        assert!(err.to_string().starts_with("driver:"), "{err}");
    }
}
