//! Backward sweep for semilinear terminal-value problems on simulated path
//! bundles. Each step regresses the one-step target on the current states,
//! extracts the gradient field from increment-weighted residuals, then
//! resolves the driver coupling with a monotone scalar root find.
//!
//! The step in y is theta-weighted between the regressed explicit part and
//! the implicit driver evaluation; the optional obstacle penalty is always
//! fully implicit so the scalar map stays monotone under the step-size
//! condition `theta * dt * max(mu, 0) < 1`.

use crate::basis::{regress, BasisSpec};
use crate::error::CoreError;
use crate::model::{DriverFn, ProblemSpec, ScalarField};
use crate::sde::PathBundle;
use crate::Result;
use rayon::prelude::*;

/// Knobs for a single backward sweep.
#[derive(Debug, Clone)]
pub struct SolveOpts {
    /// Basis for the conditional-expectation regressions; `None` picks the
    /// dimension default.
    pub basis: Option<BasisSpec>,
    /// Weight on the implicit driver evaluation; 1.0 is backward Euler,
    /// 0.5 trapezoidal.
    pub driver_theta: f64,
    /// Number of fully implicit steps next to the terminal time before
    /// switching to `driver_theta`. Keeping this at >= 1 means the terminal
    /// gradient is never consumed by the explicit part.
    pub startup_implicit_steps: usize,
    /// Absolute-ish tolerance for the scalar root find.
    pub root_tol: f64,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts {
            basis: None,
            driver_theta: 0.5,
            startup_implicit_steps: 1,
            root_tol: 1e-12,
        }
    }
}

/// How the obstacle enters the sweep, if at all.
pub(crate) enum Hook<'a> {
    /// Plain terminal-value problem.
    None,
    /// Project onto the obstacle after the driver step and record the push.
    Reflect { h: &'a ScalarField },
    /// Add the implicit penalty `dt * n * (y - h)^-` inside the root find.
    Penalize { h: &'a ScalarField, n: f64 },
}

/// Fields produced by a backward sweep, stored time-major: index
/// `i * (J * M) + (j * M + m)` for time knot `i`, start point `j`, path `m`.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub n_points: usize,
    pub paths_per_point: usize,
    pub n_steps: usize,
    pub dim: usize,
    /// Start points, copied from the bundle that produced this solution.
    pub initial_points: Vec<Vec<f64>>,
    /// Value field at every knot and path.
    pub y: Vec<f64>,
    /// Gradient-type field; the terminal slice is identically zero since no
    /// increment extends past the horizon.
    pub z: Vec<f64>,
    /// Cumulative reflection effort; identically zero without an obstacle,
    /// and `k[0] == 0` exactly by construction.
    pub k: Vec<f64>,
    /// Value-regression coefficients for each step below the terminal.
    pub coeffs: Vec<Vec<f64>>,
    /// Steps whose value or gradient regression was rank deficient.
    pub rank_deficient_steps: Vec<usize>,
    /// Largest |implicit-step residual| left by the root finder.
    pub max_step_residual: f64,
    /// Which sweep produced this: "plain", "reflected", or "penalized".
    pub mode: &'static str,
    pub theta: f64,
    pub basis: BasisSpec,
}

impl BackwardSolution {
    #[inline]
    fn path_count(&self) -> usize {
        self.n_points * self.paths_per_point
    }

    #[inline]
    pub fn y_at(&self, i: usize, j: usize, m: usize) -> f64 {
        self.y[i * self.path_count() + j * self.paths_per_point + m]
    }

    #[inline]
    pub fn z_at(&self, i: usize, j: usize, m: usize) -> &[f64] {
        let p = i * self.path_count() + j * self.paths_per_point + m;
        &self.z[p * self.dim..(p + 1) * self.dim]
    }

    #[inline]
    pub fn k_at(&self, i: usize, j: usize, m: usize) -> f64 {
        self.k[i * self.path_count() + j * self.paths_per_point + m]
    }

    /// Value at the initial time for start point `j`; all paths from a
    /// common start share it, so this is just the first one.
    pub fn value_at_start(&self, j: usize) -> f64 {
        self.y_at(0, j, 0)
    }

    /// Gradient field at the initial time for start point `j`.
    pub fn gradient_at_start(&self, j: usize) -> &[f64] {
        self.z_at(0, j, 0)
    }

    /// Terminal reflection effort averaged over the paths of start point j.
    pub fn mean_terminal_k(&self, j: usize) -> f64 {
        let m = self.paths_per_point;
        (0..m).map(|q| self.k_at(self.n_steps, j, q)).sum::<f64>() / m as f64
    }
}

/// Solve the scalar implicit relation
/// `y - theta_dt * f(t, x, y, z) - pen_dt * max(h - y, 0) = rhs`
/// for `y`. The map is strictly increasing whenever
/// `theta_dt * max(mu, 0) < 1`, so a sign-changing bracket pins the root;
/// the bracket is then shrunk by a secant step guarded by bisection.
pub fn implicit_driver_step(
    f: &DriverFn,
    t: f64,
    x: &[f64],
    z: &[f64],
    rhs: f64,
    theta_dt: f64,
    penalty: Option<(f64, f64)>,
    tol: f64,
) -> Result<f64> {
    if theta_dt == 0.0 && penalty.is_none() {
        return Ok(rhs);
    }
    let g = |y: f64| -> f64 {
        let mut v = y - theta_dt * f(t, x, y, z) - rhs;
        if let Some((pen_dt, h)) = penalty {
            v -= pen_dt * (h - y).max(0.0);
        }
        v
    };

    let mut a = rhs;
    let mut ga = g(a);
    if !ga.is_finite() {
        return Err(CoreError::NoBracket {
            location: format!("t={t}, x[0]={}", x.first().copied().unwrap_or(f64::NAN)),
            detail: format!("residual not finite at initial guess {a}"),
        });
    }
    if ga == 0.0 {
        return Ok(a);
    }

    // expand away from the guess in the direction the residual points
    let mut step = 0.5 * (1.0 + rhs.abs());
    let mut b = a;
    let mut gb = ga;
    let mut found = false;
    for _ in 0..200 {
        if ga > 0.0 {
            b = a;
            gb = ga;
            a -= step;
            ga = g(a);
        } else {
            a = b;
            ga = gb;
            b += step;
            gb = g(b);
        }
        if !ga.is_finite() || !gb.is_finite() {
            break;
        }
        if ga <= 0.0 && gb >= 0.0 {
            found = true;
            break;
        }
        step *= 2.0;
    }
    if !found {
        return Err(CoreError::NoBracket {
            location: format!("t={t}, x[0]={}", x.first().copied().unwrap_or(f64::NAN)),
            detail: format!(
                "no sign change after bracket expansion: g({a})={ga}, g({b})={gb}"
            ),
        });
    }
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }

    // secant guarded by bisection inside the bracket
    for _ in 0..120 {
        let width = b - a;
        let scale = 1.0 + a.abs().max(b.abs());
        if width <= tol * scale {
            break;
        }
        let mut c = if gb != ga {
            a - ga * width / (gb - ga)
        } else {
            a + 0.5 * width
        };
        // keep strictly interior so the bracket always shrinks
        let margin = 0.01 * width;
        if !(c > a + margin && c < b - margin) {
            c = a + 0.5 * width;
        }
        let gc = g(c);
        if gc == 0.0 {
            return Ok(c);
        }
        if gc < 0.0 {
            a = c;
            ga = gc;
        } else {
            b = c;
            gb = gc;
        }
    }
    // return the endpoint with the smaller residual magnitude
    Ok(if ga.abs() <= gb.abs() { a } else { b })
}

/// Backward sweep without an obstacle.
pub fn solve_bsde(
    spec: &ProblemSpec,
    bundle: &PathBundle,
    opts: &SolveOpts,
) -> Result<BackwardSolution> {
    backward_sweep(spec, bundle, opts, Hook::None, None)
}

pub(crate) fn backward_sweep(
    spec: &ProblemSpec,
    bundle: &PathBundle,
    opts: &SolveOpts,
    hook: Hook<'_>,
    frozen_z: Option<&[f64]>,
) -> Result<BackwardSolution> {
    let d = bundle.dim;
    if d != spec.diffusion.dim {
        return Err(CoreError::Shape(format!(
            "bundle dimension {d} does not match problem dimension {}",
            spec.diffusion.dim
        )));
    }
    if !(0.0..=1.0).contains(&opts.driver_theta) {
        return Err(CoreError::Shape(format!(
            "driver_theta {} outside [0, 1]",
            opts.driver_theta
        )));
    }
    let theta_cap = opts.driver_theta.max(if opts.startup_implicit_steps > 0 {
        1.0
    } else {
        0.0
    });
    if theta_cap > 0.0 {
        bundle
            .grid
            .check_monotone_step(theta_cap * spec.driver.mu)?;
    }

    let n = bundle.grid.n_steps();
    let pcount = bundle.initial_points.len() * bundle.paths_per_point;
    let basis = opts
        .basis
        .clone()
        .unwrap_or_else(|| BasisSpec::default_for_dim(d));
    if let Some(zf) = frozen_z {
        if zf.len() != pcount * (n + 1) * d {
            return Err(CoreError::Shape(format!(
                "frozen gradient field has length {}, expected {}",
                zf.len(),
                pcount * (n + 1) * d
            )));
        }
    }

    let mut y = vec![0.0f64; pcount * (n + 1)];
    let mut z = vec![0.0f64; pcount * (n + 1) * d];
    let mut k = vec![0.0f64; pcount * (n + 1)];
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut rank_deficient_steps = Vec::new();
    let mut max_step_residual = 0.0f64;

    let f = &spec.driver.f;
    let g = &spec.terminal.g;

    // terminal slice
    {
        let m_per = bundle.paths_per_point;
        y[n * pcount..]
            .par_iter_mut()
            .enumerate()
            .for_each(|(p, slot)| *slot = g(bundle.state(p / m_per, p % m_per, n)));
    }

    // reusable per-step buffers
    let mut pts = vec![0.0f64; pcount * d];
    let mut targets = vec![0.0f64; pcount];
    let mut resid = vec![0.0f64; pcount];
    let mut ztarget = vec![0.0f64; pcount];
    let mut cv_target = vec![0.0f64; pcount];

    for i in (0..n).rev() {
        let t_lo = bundle.grid.knot(i);
        let t_hi = bundle.grid.knot(i + 1);
        let dt = t_hi - t_lo;
        let theta = if n - 1 - i < opts.startup_implicit_steps {
            1.0
        } else {
            opts.driver_theta
        };

        // gather current states and one-step targets
        let yup_off = (i + 1) * pcount;
        let zup_off = (i + 1) * pcount * d;
        let m_per = bundle.paths_per_point;
        {
            let yref = &y;
            let zref = &z;
            pts.par_chunks_mut(d)
                .zip(targets.par_iter_mut())
                .enumerate()
                .for_each(|(p, (xslot, tslot))| {
                    let (j, m) = (p / m_per, p % m_per);
                    xslot.copy_from_slice(bundle.state(j, m, i));
                    let xup = bundle.state(j, m, i + 1);
                    let yup = yref[yup_off + p];
                    let zup = match frozen_z {
                        Some(zf) => &zf[zup_off + p * d..zup_off + (p + 1) * d],
                        None => &zref[zup_off + p * d..zup_off + (p + 1) * d],
                    };
                    let explicit = if theta < 1.0 {
                        (1.0 - theta) * dt * f(t_hi, xup, yup, zup)
                    } else {
                        0.0
                    };
                    *tslot = yup + explicit;
                });
        }

        // pilot fit of the conditional mean, used only to center the
        // gradient targets
        let reg_pilot = regress(&basis, &pts, d, &targets)?;
        let mut deficient = reg_pilot.rank_deficient();
        {
            let reg = &reg_pilot;
            resid
                .par_iter_mut()
                .zip(pts.par_chunks(d))
                .zip(targets.par_iter())
                .for_each(|((r, x), t)| *r = t - reg.predict(x));
        }

        // gradient field, one coordinate at a time, from increment-weighted
        // residuals; subtracting the fitted mean leaves the conditional
        // expectation unchanged and collapses the variance
        for c in 0..d {
            {
                let residref = &resid;
                ztarget
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(p, slot)| {
                        let (j, m) = (p / m_per, p % m_per);
                        let db = bundle.increment(j, m, i)[c];
                        *slot = residref[p] * db / dt;
                    });
            }
            let reg_z = regress(&basis, &pts, d, &ztarget)?;
            deficient |= reg_z.rank_deficient();
            let zoff = i * pcount * d;
            let reg = &reg_z;
            z[zoff..zoff + pcount * d]
                .par_chunks_mut(d)
                .zip(pts.par_chunks(d))
                .for_each(|(zslot, x)| zslot[c] = reg.predict(x));
        }

        // final conditional-mean fit on martingale-corrected targets:
        // subtracting z_i . dB_i leaves E[.|X_i] unchanged and removes the
        // dominant fluctuation of the one-step target
        {
            let zslice = &z[i * pcount * d..(i + 1) * pcount * d];
            cv_target
                .par_iter_mut()
                .enumerate()
                .for_each(|(p, slot)| {
                    let (j, m) = (p / m_per, p % m_per);
                    let db = bundle.increment(j, m, i);
                    let mut corr = 0.0;
                    for c in 0..d {
                        corr += zslice[p * d + c] * db[c];
                    }
                    *slot = targets[p] - corr;
                });
        }
        let reg_y = regress(&basis, &pts, d, &cv_target)?;
        deficient |= reg_y.rank_deficient();
        coeffs[i] = reg_y.coefficients();
        if deficient {
            rank_deficient_steps.push(i);
        }

        // implicit driver resolution per path, plus the obstacle hook
        let theta_dt = theta * dt;
        let tol = opts.root_tol;
        let zoff = i * pcount * d;
        let koff = (i + 1) * pcount;
        let (ylo, _) = y.split_at_mut((i + 1) * pcount);
        let ylo = &mut ylo[i * pcount..];
        let zslice = &z[zoff..zoff + pcount * d];
        let kslice = &mut k[koff..koff + pcount];
        let reg = &reg_y;
        let step_residual: std::result::Result<f64, CoreError> = ylo
            .par_iter_mut()
            .zip(kslice.par_iter_mut())
            .enumerate()
            .map(|(p, (yslot, kslot))| {
                let x = &pts[p * d..(p + 1) * d];
                let rhs = reg.predict(x);
                let zrow = &zslice[p * d..(p + 1) * d];
                let zdrv = match frozen_z {
                    Some(zf) => &zf[i * pcount * d + p * d..i * pcount * d + (p + 1) * d],
                    None => zrow,
                };
                let res;
                match &hook {
                    Hook::None => {
                        let yval =
                            implicit_driver_step(f, t_lo, x, zdrv, rhs, theta_dt, None, tol)?;
                        res = (yval - theta_dt * f(t_lo, x, yval, zdrv) - rhs).abs();
                        *yslot = yval;
                    }
                    Hook::Reflect { h } => {
                        let ytilde =
                            implicit_driver_step(f, t_lo, x, zdrv, rhs, theta_dt, None, tol)?;
                        res = (ytilde - theta_dt * f(t_lo, x, ytilde, zdrv) - rhs).abs();
                        let hb = h(t_lo, x);
                        let yval = ytilde.max(hb);
                        *yslot = yval;
                        *kslot = yval - ytilde;
                    }
                    Hook::Penalize { h, n: pen } => {
                        let hb = h(t_lo, x);
                        let yval = implicit_driver_step(
                            f,
                            t_lo,
                            x,
                            zdrv,
                            rhs,
                            theta_dt,
                            Some((dt * pen, hb)),
                            tol,
                        )?;
                        res = (yval
                            - theta_dt * f(t_lo, x, yval, zdrv)
                            - dt * pen * (hb - yval).max(0.0)
                            - rhs)
                            .abs();
                        *yslot = yval;
                        *kslot = dt * pen * (hb - yval).max(0.0);
                    }
                }
                Ok(res)
            })
            .reduce(
                || Ok(0.0),
                |a, b| match (a, b) {
                    (Ok(x), Ok(y)) => Ok(x.max(y)),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                },
            );
        max_step_residual = max_step_residual.max(step_residual?);
    }

    // turn the per-step pushes into a running total, so k[0] == 0 exactly
    for i in 1..=n {
        let (head, tail) = k.split_at_mut(i * pcount);
        let prev = &head[(i - 1) * pcount..];
        let cur = &mut tail[..pcount];
        for p in 0..pcount {
            cur[p] += prev[p];
        }
    }

    let mode = match hook {
        Hook::None => "plain",
        Hook::Reflect { .. } => "reflected",
        Hook::Penalize { .. } => "penalized",
    };
    Ok(BackwardSolution {
        n_points: bundle.initial_points.len(),
        paths_per_point: bundle.paths_per_point,
        n_steps: n,
        dim: d,
        initial_points: bundle.initial_points.clone(),
        y,
        z,
        k,
        coeffs,
        rank_deficient_steps,
        max_step_residual,
        mode,
        theta: opts.driver_theta,
        basis,
    })
}

/// Options for the frozen-gradient fixed-point iteration.
#[derive(Debug, Clone)]
pub struct PicardOpts {
    /// Exponential weight in the iteration distance; `None` derives
    /// `1 + 2 k^2` from the declared gradient Lipschitz constant.
    pub gamma: Option<f64>,
    /// Stop when successive iterates are this close in the weighted norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Gradient field for the baseline sweep, laid out like
    /// [`BackwardSolution::z`]; zeros when absent.
    pub initial_z: Option<Vec<f64>>,
}

impl Default for PicardOpts {
    fn default() -> Self {
        PicardOpts {
            gamma: None,
            tol: 1e-7,
            max_iter: 25,
            initial_z: None,
        }
    }
}

/// Convergence record of the fixed-point iteration.
pub struct PicardReport {
    /// Sweeps performed after the baseline; equals `distances.len()`.
    pub iterations: usize,
    pub gamma: f64,
    /// Distance between successive iterates, one entry per iteration.
    pub distances: Vec<f64>,
    pub solution: BackwardSolution,
}

/// Iterate backward sweeps with the gradient argument of the driver frozen
/// at the previous iterate's field. A baseline sweep from `initial_z`
/// (zeros by default) seeds the iteration; the distance between successive
/// iterates is a start-point-weighted, exponentially tilted path norm of
/// the value and gradient differences. A driver that ignores z therefore
/// converges after one iteration with distance exactly 0. Three
/// consecutive non-decreases abort with the distance history attached.
pub fn picard_solve(
    spec: &ProblemSpec,
    bundle: &PathBundle,
    opts: &SolveOpts,
    picard: &PicardOpts,
) -> Result<PicardReport> {
    let gamma = picard
        .gamma
        .unwrap_or_else(|| 1.0 + 2.0 * spec.driver.zlip * spec.driver.zlip);
    let n = bundle.grid.n_steps();
    let pcount = bundle.initial_points.len() * bundle.paths_per_point;
    let d = bundle.dim;

    let seed_z = match &picard.initial_z {
        Some(v) => v.clone(),
        None => vec![0.0f64; pcount * (n + 1) * d],
    };
    let mut prev = backward_sweep(spec, bundle, opts, Hook::None, Some(&seed_z))?;
    let mut distances = Vec::new();
    let mut rises = 0usize;

    for it in 1..=picard.max_iter {
        let sol = backward_sweep(spec, bundle, opts, Hook::None, Some(&prev.z))?;
        let dist = iterate_distance(spec, bundle, gamma, &prev.y, &prev.z, &sol);
        distances.push(dist);
        if distances.len() >= 2 && dist >= distances[distances.len() - 2] {
            rises += 1;
            if rises >= 3 {
                return Err(CoreError::NoContraction { diffs: distances });
            }
        } else {
            rises = 0;
        }
        if dist <= picard.tol {
            return Ok(PicardReport {
                iterations: it,
                gamma,
                distances,
                solution: sol,
            });
        }
        prev = sol;
    }
    Err(CoreError::NoContraction { diffs: distances })
}

/// Weighted squared distance between the previous iterate's fields and a
/// fresh solution, accumulated sequentially in a fixed order.
fn iterate_distance(
    spec: &ProblemSpec,
    bundle: &PathBundle,
    gamma: f64,
    prev_y: &[f64],
    prev_z: &[f64],
    sol: &BackwardSolution,
) -> f64 {
    let n = bundle.grid.n_steps();
    let mcount = bundle.paths_per_point;
    let pcount = bundle.initial_points.len() * mcount;
    let d = bundle.dim;
    let mut total = 0.0;
    for j in 0..bundle.initial_points.len() {
        let w = spec.weight.rho(&bundle.initial_points[j]);
        let mut acc = 0.0;
        for m in 0..mcount {
            let p = j * mcount + m;
            for i in 0..n {
                let dt = bundle.grid.knot(i + 1) - bundle.grid.knot(i);
                let tilt = (gamma * bundle.grid.knot(i)).exp();
                let dy = sol.y[i * pcount + p] - prev_y[i * pcount + p];
                let mut dz2 = 0.0;
                for c in 0..d {
                    let dzc =
                        sol.z[(i * pcount + p) * d + c] - prev_z[(i * pcount + p) * d + c];
                    dz2 += dzc * dzc;
                }
                acc += tilt * dt * (dy * dy + dz2);
            }
        }
        total += w * acc / mcount as f64;
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, DriverSpec, ProblemSpec, TerminalSpec, WeightSpec};
    use crate::sde::{simulate_bundle, TimeGrid};
    use std::sync::Arc;

    fn constant_terminal_problem(
        mu_decl: f64,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> ProblemSpec {
        ProblemSpec::new(
            DiffusionSpec::scalar(|_, x| 0.05 * x, |_, x| 0.2 * x, 0.05, 0.2),
            DriverSpec::scalar(f, mu_decl, 0.0, 1.0, 1.0),
            TerminalSpec::new(|_x: &[f64]| 1.0, 1.0, 0.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        )
    }

    #[test]
    fn implicit_step_matches_closed_forms() {
        let f: crate::model::DriverFn = Arc::new(|_t, _x, y, _z| -y * y * y);
        // y + c y^3 = rhs with c = 0.02, rhs = 1
        let y = implicit_driver_step(&f, 0.0, &[0.0], &[0.0], 1.0, 0.02, None, 1e-14).unwrap();
        assert!((y + 0.02 * y * y * y - 1.0).abs() < 1e-12);

        // explicit step is an identity
        let y0 = implicit_driver_step(&f, 0.0, &[0.0], &[0.0], 0.7, 0.0, None, 1e-14).unwrap();
        assert_eq!(y0, 0.7);

        // pure penalty below the barrier: y (1 + p) = rhs + p h
        let zero: crate::model::DriverFn = Arc::new(|_t, _x, _y, _z| 0.0);
        let (p, h, rhs) = (50.0, 0.5, 0.0);
        let y = implicit_driver_step(&zero, 0.0, &[0.0], &[0.0], rhs, 1.0, Some((p, h)), 1e-14)
            .unwrap();
        assert!((y - (rhs + p * h) / (1.0 + p)).abs() < 1e-10, "y={y}");
    }

    #[test]
    fn rootless_residual_reports_no_bracket() {
        // y - 0.1 y^2 stays below any large rhs, so no sign change exists
        let f: crate::model::DriverFn = Arc::new(|_t, _x, y, _z| y * y);
        let err =
            implicit_driver_step(&f, 0.3, &[2.0], &[0.0], 1e7, 0.1, None, 1e-12).unwrap_err();
        match err {
            CoreError::NoBracket { location, .. } => assert!(location.contains("t=0.3")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decay_driver_reproduces_the_exponential() {
        let spec = constant_terminal_problem(0.0, |_t, _x, y, _z| -y);
        let grid = TimeGrid::uniform(1.0, 32);
        let bundle = simulate_bundle(&spec.diffusion, &grid, &[vec![100.0]], 20_000, 97).unwrap();
        let sol = solve_bsde(&spec, &bundle, &SolveOpts::default()).unwrap();
        let want = (-1.0f64).exp();
        assert!(
            (sol.value_at_start(0) - want).abs() < 5e-4,
            "value {} vs {want}",
            sol.value_at_start(0)
        );
        // value is a constant in x here, so the fitted gradient can only be
        // regression roundoff
        assert!(sol.gradient_at_start(0)[0].abs() < 1e-9);
    }

    #[test]
    fn cubic_decay_on_frozen_paths_matches_the_ode() {
        let spec = ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0),
            DriverSpec::scalar(|_t, _x, y, _z| -y * y * y, 0.0, 0.0, 1.0, 3.0),
            TerminalSpec::new(|_x: &[f64]| 1.0, 1.0, 0.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        );
        let grid = TimeGrid::uniform(1.0, 50);
        let bundle = simulate_bundle(&spec.diffusion, &grid, &[vec![0.3]], 4, 7).unwrap();
        let sol = solve_bsde(&spec, &bundle, &SolveOpts::default()).unwrap();
        let want = 1.0 / 3.0f64.sqrt();
        assert!(
            (sol.value_at_start(0) - want).abs() < 2e-4,
            "value {} vs {want}",
            sol.value_at_start(0)
        );
    }

    #[test]
    fn picard_iteration_contracts_on_a_gradient_coupled_driver() {
        let spec = ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0),
            DriverSpec::scalar(|_t, _x, y, z| -y + 0.5 * z, 0.0, 0.5, 1.0, 1.0),
            TerminalSpec::new(|x: &[f64]| (-x[0]).exp().min(10.0), 10.0, 0.0),
            None,
            WeightSpec::Exponential { alpha: -1.0 },
            0.5,
        );
        let grid = TimeGrid::uniform(0.5, 20);
        let bundle = simulate_bundle(&spec.diffusion, &grid, &[vec![0.0]], 4_000, 11).unwrap();
        let report = picard_solve(&spec, &bundle, &SolveOpts::default(), &PicardOpts::default())
            .unwrap();
        assert!(report.iterations >= 2);
        assert_eq!(report.iterations, report.distances.len());
        assert!(report.distances.last().unwrap() <= &1e-7);
        for w in report.distances.windows(2) {
            assert!(w[1] <= w[0], "distances rose: {:?}", report.distances);
        }
        assert!((report.gamma - 1.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_free_driver_fixes_in_one_iteration() {
        let spec = constant_terminal_problem(0.0, |_t, _x, y, _z| -y);
        let grid = TimeGrid::uniform(1.0, 8);
        let bundle = simulate_bundle(&spec.diffusion, &grid, &[vec![1.0]], 64, 5).unwrap();
        let report =
            picard_solve(&spec, &bundle, &SolveOpts::default(), &PicardOpts::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(report.distances[0], 0.0);
    }

    #[test]
    fn sweep_rejects_step_sizes_that_break_monotonicity() {
        // mu = 12 with dt = 1/10 violates theta*dt*mu < 1 at theta = 1
        let spec = constant_terminal_problem(12.0, |_t, _x, y, _z| 12.0 * y);
        let grid = TimeGrid::uniform(1.0, 10);
        let bundle = simulate_bundle(&spec.diffusion, &grid, &[vec![1.0]], 8, 3).unwrap();
        let err = solve_bsde(&spec, &bundle, &SolveOpts::default()).unwrap_err();
        assert!(matches!(err, CoreError::Grid(_)));
    }
}
