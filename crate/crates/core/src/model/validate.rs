//! Sample-based validation of declared problem structure.
//!
//! Every analytic claim a spec makes (Lipschitz bounds, monotonicity,
//! growth envelopes, obstacle compatibility, weight admissibility) is probed
//! at quasi-random points of a declared box. Validation can prove a spec
//! wrong, never right; the solvers treat a passing report as license to rely
//! on the declared constants.

use super::{norm2, ProblemSpec, WeightSpec};
use crate::error::CoreError;
use crate::Result;

/// Probe layout for [`validate_problem`]: a box in x, symmetric ranges for
/// the y and z arguments, the probe count, and the relative tolerance used
/// for every sampled inequality.
#[derive(Debug, Clone)]
pub struct ProbePlan {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub y_abs: f64,
    pub z_abs: f64,
    pub probes: usize,
    pub tol: f64,
}

impl ProbePlan {
    /// 10^4 probes over the given box with |y| <= 10, |z| <= 10 and relative
    /// tolerance 1e-9.
    pub fn over_box(x_lo: Vec<f64>, x_hi: Vec<f64>) -> Self {
        Self {
            x_lo,
            x_hi,
            y_abs: 10.0,
            z_abs: 10.0,
            probes: 10_000,
            tol: 1e-9,
        }
    }
}

/// Outcome of one sampled invariant: worst probe over the whole plan.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Human-readable worst probe location.
    pub worst_probe: String,
    /// Signed margin at the worst probe; negative means violated.
    pub worst_margin: f64,
    pub detail: String,
}

/// Per-invariant results; `passed` is the conjunction.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    /// Converts the first failed check into an error naming the offending
    /// function and probe.
    pub fn ensure(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(CoreError::IllPosedSpec {
                function: c.name.clone(),
                probe: c.worst_probe.clone(),
                detail: c.detail.clone(),
            }),
        }
    }
}

/// Additive low-discrepancy sequence in `dim` dimensions (Kronecker sequence
/// driven by the generalized golden ratio), deterministic and unseeded.
pub(crate) struct QuasiGrid {
    alphas: Vec<f64>,
    state: Vec<f64>,
}

impl QuasiGrid {
    pub fn new(dim: usize) -> Self {
        // Unique positive root of x^(dim+1) = x + 1.
        let mut phi = 1.5f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alphas: Vec<f64> = (1..=dim).map(|k| (1.0 / phi).powi(k as i32)).collect();
        Self {
            alphas,
            state: vec![0.5; dim],
        }
    }

    /// Next point in the unit cube.
    pub fn next_point(&mut self, out: &mut [f64]) {
        for (s, a) in self.state.iter_mut().zip(&self.alphas) {
            *s += a;
            if *s >= 1.0 {
                *s -= 1.0;
            }
        }
        out.copy_from_slice(&self.state);
    }
}

struct Worst {
    margin: f64,
    probe: String,
    detail: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            probe: "none".into(),
            detail: String::new(),
        }
    }

    fn update(&mut self, margin: f64, probe: impl FnOnce() -> (String, String)) {
        if margin < self.margin || !margin.is_finite() {
            let m = if margin.is_finite() {
                margin
            } else {
                f64::NEG_INFINITY
            };
            if m < self.margin {
                self.margin = m;
                let (p, d) = probe();
                self.probe = p;
                self.detail = d;
            }
        }
    }

    fn into_check(self, name: &str) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: self.margin >= 0.0,
            worst_probe: self.probe,
            worst_margin: self.margin,
            detail: self.detail,
        }
    }
}

/// Probes every declared invariant of `spec` over `plan`. Structural
/// preconditions (at least one probe, positive tolerance, box shape matching
/// the dimension) are hard errors; sampled violations come back as failed
/// checks in the report.
pub fn validate_problem(spec: &ProblemSpec, plan: &ProbePlan) -> Result<ValidationReport> {
    let d = spec.dim();
    if plan.probes == 0 {
        return Err(CoreError::Shape("probe plan has zero probes".into()));
    }
    if !(plan.tol > 0.0) {
        return Err(CoreError::Shape(format!(
            "probe tolerance must be positive, got {}",
            plan.tol
        )));
    }
    if plan.x_lo.len() != d || plan.x_hi.len() != d {
        return Err(CoreError::Shape(format!(
            "probe box dimension {} does not match problem dimension {}",
            plan.x_lo.len(),
            d
        )));
    }
    if plan.x_lo.iter().zip(&plan.x_hi).any(|(l, h)| !(l < h)) {
        return Err(CoreError::Shape("probe box must have positive extent".into()));
    }

    let t_end = spec.horizon;
    // Probe tuple layout: t, x (d), x' (d), y, y', z (d), z' (d).
    let qdim = 1 + 2 * d + 2 + 2 * d;
    let mut quasi = QuasiGrid::new(qdim);
    let mut u = vec![0.0; qdim];

    let mut x = vec![0.0; d];
    let mut xp = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut zp = vec![0.0; d];
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];
    let zero_z = vec![0.0; d];

    let mut drift_lip = Worst::new();
    let mut diff_lip = Worst::new();
    let mut monotone = Worst::new();
    let mut zlip = Worst::new();
    let mut growth = Worst::new();
    let mut terminal_fin = Worst::new();
    let mut compat = Worst::new();
    let mut obs_growth = Worst::new();

    // Sampled mean of g^2 rho over the box, for the report detail.
    let mut g2rho_sum = 0.0f64;

    let tol = plan.tol;
    let slack = 1.01; // declared Lipschitz bounds get 1% sampling slack

    for _ in 0..plan.probes {
        quasi.next_point(&mut u);
        let mut k = 0;
        let t = u[k] * t_end;
        k += 1;
        for i in 0..d {
            x[i] = plan.x_lo[i] + u[k] * (plan.x_hi[i] - plan.x_lo[i]);
            k += 1;
        }
        for i in 0..d {
            xp[i] = plan.x_lo[i] + u[k] * (plan.x_hi[i] - plan.x_lo[i]);
            k += 1;
        }
        let y = (2.0 * u[k] - 1.0) * plan.y_abs;
        k += 1;
        let yp = (2.0 * u[k] - 1.0) * plan.y_abs;
        k += 1;
        for i in 0..d {
            z[i] = (2.0 * u[k] - 1.0) * plan.z_abs;
            k += 1;
        }
        for i in 0..d {
            zp[i] = (2.0 * u[k] - 1.0) * plan.z_abs;
            k += 1;
        }

        let dx: f64 = x
            .iter()
            .zip(&xp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        // Coefficient Lipschitz quotients, skipping near-coincident pairs.
        spec.diffusion.drift_at(t, &x, &mut b1);
        spec.diffusion.drift_at(t, &xp, &mut b2);
        spec.diffusion.diffusion_at(t, &x, &mut s1);
        spec.diffusion.diffusion_at(t, &xp, &mut s2);
        let db = b1
            .iter()
            .zip(&b2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let ds = s1
            .iter()
            .zip(&s2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if !db.is_finite() || !ds.is_finite() {
            drift_lip.update(f64::NEG_INFINITY, || {
                (
                    format!("t={t}, x={x:?}, x'={xp:?}"),
                    "non-finite coefficient value".into(),
                )
            });
        } else if dx > 1e-9 {
            drift_lip.update(spec.diffusion.lip_drift * slack - db / dx, || {
                (
                    format!("t={t}, x={x:?}, x'={xp:?}"),
                    format!(
                        "drift quotient {} exceeds declared bound {}",
                        db / dx,
                        spec.diffusion.lip_drift
                    ),
                )
            });
            diff_lip.update(spec.diffusion.lip_diffusion * slack - ds / dx, || {
                (
                    format!("t={t}, x={x:?}, x'={xp:?}"),
                    format!(
                        "diffusion quotient {} exceeds declared bound {}",
                        ds / dx,
                        spec.diffusion.lip_diffusion
                    ),
                )
            });
        }

        // Driver monotonicity in y at fixed (t, x, z).
        let fy = spec.driver.eval(t, &x, y, &z);
        let fyp = spec.driver.eval(t, &x, yp, &z);
        let dy = y - yp;
        let lhs = dy * (fy - fyp);
        let rhs = spec.driver.mu * dy * dy;
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        monotone.update(rhs - lhs + tol * scale, || {
            (
                format!("t={t}, x={x:?}, y={y}, y'={yp}, z={z:?}"),
                format!(
                    "(y-y')(f(y)-f(y')) = {lhs} exceeds mu (y-y')^2 = {rhs} beyond tolerance"
                ),
            )
        });

        // Driver Lipschitz in z at fixed (t, x, y).
        let fz = spec.driver.eval(t, &x, y, &z);
        let fzp = spec.driver.eval(t, &x, y, &zp);
        let dz = z
            .iter()
            .zip(&zp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let gap = (fz - fzp).abs();
        let scale = 1.0 + gap;
        zlip.update(spec.driver.zlip * dz - gap + tol * scale, || {
            (
                format!("t={t}, x={x:?}, y={y}, z={z:?}, z'={zp:?}"),
                format!(
                    "|f(z)-f(z')| = {gap} exceeds declared zlip {} * |z-z'| = {}",
                    spec.driver.zlip,
                    spec.driver.zlip * dz
                ),
            )
        });

        // Growth envelope at z = 0.
        let f0 = spec.driver.eval(t, &x, 0.0, &zero_z);
        let fy0 = spec.driver.eval(t, &x, y, &zero_z);
        let envelope = f0.abs() + spec.driver.phi(y.abs());
        let scale = 1.0 + fy0.abs().max(envelope);
        growth.update(envelope - fy0.abs() + tol * scale, || {
            (
                format!("t={t}, x={x:?}, y={y}"),
                format!(
                    "|f(t,x,y,0)| = {} exceeds |f(t,x,0,0)| + phi(|y|) = {envelope}",
                    fy0.abs()
                ),
            )
        });

        // Terminal finiteness and growth envelope; weighted square integrand.
        let g = spec.terminal.eval(&x);
        let rho = spec.weight.rho(&x);
        if !g.is_finite() {
            terminal_fin.update(f64::NEG_INFINITY, || {
                (format!("x={x:?}"), "terminal value not finite".into())
            });
        } else {
            let env = spec.terminal.kappa * (1.0 + norm2(&x).powf(spec.terminal.beta));
            let scale = 1.0 + g.abs().max(env);
            terminal_fin.update(env - g.abs() + tol * scale, || {
                (
                    format!("x={x:?}"),
                    format!("|g(x)| = {} exceeds declared envelope {env}", g.abs()),
                )
            });
            g2rho_sum += g * g * rho;
        }

        // Obstacle compatibility and growth.
        if let Some(obs) = &spec.obstacle {
            let h_end = obs.eval(t_end, &x);
            let scale = 1.0 + h_end.abs().max(g.abs());
            compat.update(g - h_end + tol * scale, || {
                (
                    format!("x={x:?}"),
                    format!("h(T,x) = {h_end} exceeds g(x) = {g}"),
                )
            });
            let h = obs.eval(t, &x);
            if !h.is_finite() {
                obs_growth.update(f64::NEG_INFINITY, || {
                    (format!("t={t}, x={x:?}"), "obstacle value not finite".into())
                });
            } else {
                let env = obs.kappa * (1.0 + norm2(&x).powf(obs.beta));
                let scale = 1.0 + h.abs().max(env);
                obs_growth.update(env - h.abs() + tol * scale, || {
                    (
                        format!("t={t}, x={x:?}"),
                        format!("|h(t,x)| = {} exceeds declared envelope {env}", h.abs()),
                    )
                });
            }
        }
    }

    let mut checks = vec![
        drift_lip.into_check("drift Lipschitz quotient"),
        diff_lip.into_check("diffusion Lipschitz quotient"),
        monotone.into_check("driver monotonicity in y"),
        zlip.into_check("driver Lipschitz in z"),
        growth.into_check("driver growth envelope"),
        {
            let mut c = terminal_fin.into_check("terminal finiteness and growth");
            if c.passed {
                c.detail = format!(
                    "sampled mean of g^2 rho over box = {:.6e}",
                    g2rho_sum / plan.probes as f64
                );
            }
            c
        },
    ];

    if spec.obstacle.is_some() {
        checks.push(compat.into_check("obstacle compatibility h(T,.) <= g"));
        checks.push(obs_growth.into_check("obstacle growth envelope"));
    }

    // Weight positivity holds by construction for both families; check
    // integrability and, with an obstacle, exponent admissibility.
    checks.push(CheckResult {
        name: "weight integrability".into(),
        passed: spec.weight.integrable(d),
        worst_probe: "analytic".into(),
        worst_margin: if spec.weight.integrable(d) { 0.0 } else { -1.0 },
        detail: format!("{:?} over dimension {d}", spec.weight),
    });
    if let Some(obs) = &spec.obstacle {
        if let WeightSpec::Polynomial { p } = spec.weight {
            let need = WeightSpec::required_obstacle_exponent(spec.driver.beta1, obs.beta, d);
            checks.push(CheckResult {
                name: "weight admissibility for obstacle".into(),
                passed: p >= need,
                worst_probe: "analytic".into(),
                worst_margin: p - need,
                detail: format!(
                    "polynomial exponent p = {p}, required beta1*beta + beta + d + 1 = {need}"
                ),
            });
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, DriverSpec, ObstacleSpec, ProblemSpec, TerminalSpec};

    fn plan() -> ProbePlan {
        ProbePlan::over_box(vec![-2.0], vec![2.0])
    }

    fn base_problem(driver: DriverSpec) -> ProblemSpec {
        ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0),
            driver,
            TerminalSpec::scalar(|_| 1.0, 1.0, 1.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        )
    }

    #[test]
    fn cubic_decay_driver_passes() {
        let spec = base_problem(DriverSpec::scalar(|_, _, y, _| -y * y * y, 0.0, 0.0, 1.0, 3.0));
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.ensure().is_ok());
    }

    #[test]
    fn misdeclared_monotonicity_fails_at_a_probe() {
        // f(y) = 2y has monotonicity constant 2, declared as 1; the growth
        // envelope is declared wide enough that only monotonicity is wrong
        let spec = base_problem(DriverSpec::scalar(|_, _, y, _| 2.0 * y, 1.0, 0.0, 2.0, 1.0));
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(!report.passed);
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].name, "driver monotonicity in y");
        let err = report.ensure().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ill-posed spec"), "{msg}");
        assert!(msg.contains("monotonicity"), "{msg}");
    }

    #[test]
    fn misdeclared_z_lipschitz_fails() {
        let spec = base_problem(DriverSpec::scalar(|_, _, _, z| 3.0 * z, 0.0, 1.0, 1.0, 1.0));
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(!report.passed);
        assert!(report
            .checks
            .iter()
            .any(|c| !c.passed && c.name == "driver Lipschitz in z"));
    }

    #[test]
    fn lipschitz_slack_accepts_declared_bound() {
        // b(x) = x has quotient exactly 1; declared bound 1 passes under the
        // 1% sampling slack.
        let spec = ProblemSpec::new(
            DiffusionSpec::scalar(|_, x| x, |_, _| 1.0, 1.0, 0.0),
            DriverSpec::scalar(|_, _, y, _| -y, 0.0, 0.0, 1.0, 1.0),
            TerminalSpec::scalar(|_| 1.0, 1.0, 1.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        );
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn obstacle_incompatibility_detected() {
        let mut spec = base_problem(DriverSpec::scalar(|_, _, y, _| -y, 0.0, 0.0, 1.0, 1.0));
        // h(T, x) = 2 > 1 = g(x).
        spec.obstacle = Some(ObstacleSpec::scalar(|_, _| 2.0, 2.0, 1.0));
        spec.weight = WeightSpec::Polynomial { p: 6.0 };
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(!report.passed);
        assert!(report
            .checks
            .iter()
            .any(|c| !c.passed && c.name.contains("compatibility")));
    }

    #[test]
    fn weight_admissibility_needs_large_exponent() {
        // beta = 1, beta1 = 3, d = 1 requires p >= 6; p = 5 must fail.
        let mut spec = base_problem(DriverSpec::scalar(|_, _, y, _| -y * y * y, 0.0, 0.0, 1.0, 3.0));
        spec.obstacle = Some(ObstacleSpec::scalar(|_, x| -1.0 - x.abs(), 2.0, 1.0));
        spec.weight = WeightSpec::Polynomial { p: 5.0 };
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(report
            .checks
            .iter()
            .any(|c| !c.passed && c.name == "weight admissibility for obstacle"));

        spec.weight = WeightSpec::Polynomial { p: 6.0 };
        let report = validate_problem(&spec, &plan()).unwrap();
        assert!(report
            .checks
            .iter()
            .filter(|c| c.name == "weight admissibility for obstacle")
            .all(|c| c.passed));
    }

    #[test]
    fn structural_preconditions_are_hard_errors() {
        let spec = base_problem(DriverSpec::scalar(|_, _, y, _| -y, 0.0, 0.0, 1.0, 1.0));
        let mut p = plan();
        p.probes = 0;
        assert!(validate_problem(&spec, &p).is_err());
        let mut p = plan();
        p.tol = 0.0;
        assert!(validate_problem(&spec, &p).is_err());
        let mut p = plan();
        p.x_lo = vec![2.0];
        p.x_hi = vec![-2.0];
        assert!(validate_problem(&spec, &p).is_err());
    }
}
