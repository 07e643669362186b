//! Deterministic one-dimensional reference solver. A theta-scheme handles
//! the linear part on a tridiagonal stencil, the driver is folded in per
//! node by a monotone scalar root-find with the gradient argument lagged,
//! and obstacles are handled either by projection or by an implicit
//! penalty. The whole step is order-preserving at theta = 1: the linear
//! solve is monotone in its right-hand side because the matrix off-diagonals
//! are nonpositive, and the node solve is a bisection on a fixed bracket
//! whose decision sequence is monotone in the data. That is what makes the
//! comparison and dominance tests exact rather than approximate.

use crate::error::CoreError;
use crate::model::{ObstacleSpec, ProblemSpec, WeightSpec};
use crate::bsde::BackwardSolution;
use crate::Result;

/// How the artificial boundary is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Boundary nodes frozen at the terminal condition's values there.
    DirichletFromTerminal,
    /// Boundary gradient clamped to the terminal condition's edge slope.
    ClampedGradient,
}

/// Obstacle handling inside the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleMethod {
    /// Implicit penalty `n (u - h)^-` added to the driver.
    Penalized(f64),
    /// Projection onto the barrier after the driver step.
    Projected,
}

/// Space-time box for the reference solve.
#[derive(Debug, Clone)]
pub struct FdGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Spatial node count including both edges, at least 3.
    pub n_nodes: usize,
    /// Time step count, at least 1.
    pub n_steps: usize,
    pub boundary: BoundaryMode,
    /// Number of initial backward steps forced fully implicit to damp
    /// nonsmooth terminal data. Set 0 when second-order startup matters.
    pub rannacher_steps: usize,
    /// Optional shared bracket for the node solves. Runs that are meant to
    /// be compared bitwise must share this; when unset each node brackets
    /// itself around its own right-hand side.
    pub value_bounds: Option<(f64, f64)>,
}

impl FdGrid {
    pub fn new(x_lo: f64, x_hi: f64, n_nodes: usize, n_steps: usize) -> Self {
        FdGrid {
            x_lo,
            x_hi,
            n_nodes,
            n_steps,
            boundary: BoundaryMode::DirichletFromTerminal,
            rannacher_steps: 2,
            value_bounds: None,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.n_nodes - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        self.x_lo + k as f64 * self.dx()
    }

    fn check(&self) -> Result<()> {
        if !(self.x_hi > self.x_lo) {
            return Err(CoreError::Grid(format!(
                "empty spatial interval [{}, {}]",
                self.x_lo, self.x_hi
            )));
        }
        if self.n_nodes < 3 {
            return Err(CoreError::Grid(format!(
                "need at least 3 spatial nodes, got {}",
                self.n_nodes
            )));
        }
        if self.n_steps == 0 {
            return Err(CoreError::Grid("need at least one time step".into()));
        }
        if let Some((lo, hi)) = self.value_bounds {
            if !(hi > lo) {
                return Err(CoreError::Grid(format!(
                    "empty value bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Dense space-time table produced by the reference solver.
#[derive(Debug, Clone)]
pub struct FdSolution {
    pub n_nodes: usize,
    pub n_steps: usize,
    pub theta: f64,
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    /// Values, time-major: `u[i * n_nodes + k]` at (ts[i], xs[k]).
    pub u: Vec<f64>,
    /// Gradient field sigma * du/dx, same layout.
    pub du: Vec<f64>,
    /// Multiplier mass deposited per node and step, same layout; zero for
    /// unconstrained runs and at the terminal row.
    pub multiplier: Vec<f64>,
    /// Contact indicator u - h <= tol (1 + |h|), same layout; all false for
    /// unconstrained runs.
    pub contact: Vec<bool>,
    /// Largest barrier violation (h - u)^+ over all nodes; exactly 0 for
    /// projected runs.
    pub barrier_violation: f64,
    pub method: &'static str,
}

impl FdSolution {
    #[inline]
    pub fn u_at(&self, i: usize, k: usize) -> f64 {
        self.u[i * self.n_nodes + k]
    }

    #[inline]
    pub fn du_at(&self, i: usize, k: usize) -> f64 {
        self.du[i * self.n_nodes + k]
    }

    pub fn total_multiplier_mass(&self) -> f64 {
        self.multiplier.iter().sum()
    }

    fn interp_row(&self, row: &[f64], x: f64) -> Result<f64> {
        let (lo, hi) = (self.xs[0], self.xs[self.n_nodes - 1]);
        if !(x >= lo && x <= hi) {
            return Err(CoreError::RegionOutsideGrid(format!(
                "x = {x} outside [{lo}, {hi}]"
            )));
        }
        let dx = self.xs[1] - self.xs[0];
        let pos = (x - lo) / dx;
        let k = (pos.floor() as usize).min(self.n_nodes - 2);
        let w = pos - k as f64;
        Ok(row[k] * (1.0 - w) + row[k + 1] * w)
    }

    /// Linear interpolation of u(ts[0], x).
    pub fn u0(&self, x: f64) -> Result<f64> {
        self.interp_row(&self.u[..self.n_nodes], x)
    }

    /// Linear interpolation of the gradient field at ts[0].
    pub fn du0(&self, x: f64) -> Result<f64> {
        self.interp_row(&self.du[..self.n_nodes], x)
    }
}

/// Tridiagonal solve, Thomas elimination. `lower[0]` and `upper[n-1]` are
/// ignored. Fails on a vanishing or non-finite pivot.
fn thomas(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    step: usize,
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0f64; n];
    let mut d = vec![0.0f64; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(CoreError::Tridiagonal {
            step,
            detail: format!("pivot {piv} at row 0"),
        });
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for k in 1..n {
        piv = diag[k] - lower[k] * c[k - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(CoreError::Tridiagonal {
                step,
                detail: format!("pivot {piv} at row {k}"),
            });
        }
        c[k] = upper[k] / piv;
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / piv;
    }
    let mut out = d;
    for k in (0..n - 1).rev() {
        out[k] -= c[k] * out[k + 1];
    }
    Ok(out)
}

/// Generator stencil row at one node: (lower, diag, upper) multiplying
/// (u[k-1], u[k], u[k+1]). Central differencing for the drift unless that
/// would make an off-diagonal weight negative, in which case the drift is
/// upwinded at that node; either way lower, upper >= 0 and the row sums
/// to zero, which is what the order-preservation of the implicit solve
/// rests on.
#[inline]
fn stencil(a: f64, b: f64, dx: f64) -> (f64, f64, f64) {
    let alpha = a / (dx * dx);
    let beta = b / dx;
    if alpha >= 0.5 * beta.abs() {
        (alpha - 0.5 * beta, -2.0 * alpha, alpha + 0.5 * beta)
    } else if b >= 0.0 {
        (alpha, -2.0 * alpha - beta, alpha + beta)
    } else {
        (alpha - beta, -2.0 * alpha + beta, alpha)
    }
}

/// Monotone scalar solve of g(v) = 0 for strictly increasing g by bisection
/// on [lo, hi] with g(lo) <= 0 <= g(hi). The midpoint sequence depends only
/// on the bracket and the signs seen, so two runs sharing a bracket whose
/// g-functions are ordered return ordered roots, bitwise.
fn fixed_bisect(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..128 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m) <= 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let m = 0.5 * (a + b);
    m.clamp(a, b)
}

struct NodeSolve {
    bounds: Option<(f64, f64)>,
    t: f64,
    step: usize,
}

impl NodeSolve {
    /// Solves v - theta_dt f(t, x, v, z) - pen_dt (h - v)^+ - w = 0.
    fn run(
        &self,
        f: &crate::model::DriverFn,
        x: f64,
        z: f64,
        w: f64,
        theta_dt: f64,
        penalty: Option<(f64, f64)>,
    ) -> Result<f64> {
        if theta_dt == 0.0 && penalty.is_none() {
            return Ok(w);
        }
        let xs = [x];
        let zs = [z];
        let g = |v: f64| {
            let mut out = v - theta_dt * f(self.t, &xs, v, &zs) - w;
            if let Some((pen_dt, h)) = penalty {
                out -= pen_dt * (h - v).max(0.0);
            }
            out
        };
        let (lo, hi) = match self.bounds {
            Some((lo, hi)) => {
                if g(lo) > 0.0 || g(hi) < 0.0 {
                    return Err(CoreError::NoBracket {
                        location: format!("t = {}, x = {x}, step {}", self.t, self.step),
                        detail: format!(
                            "shared value bounds [{lo}, {hi}] do not bracket the node solve"
                        ),
                    });
                }
                (lo, hi)
            }
            None => {
                let mut s = 1.0 + w.abs();
                let mut lo = w - s;
                let mut hi = w + s;
                let mut tries = 0;
                while g(lo) > 0.0 || g(hi) < 0.0 {
                    tries += 1;
                    if tries > 200 {
                        return Err(CoreError::NoBracket {
                            location: format!(
                                "t = {}, x = {x}, step {}",
                                self.t, self.step
                            ),
                            detail: "bracket expansion exhausted".into(),
                        });
                    }
                    s *= 2.0;
                    lo = w - s;
                    hi = w + s;
                }
                (lo, hi)
            }
        };
        Ok(fixed_bisect(g, lo, hi))
    }
}

fn sweep(
    problem: &ProblemSpec,
    obstacle: Option<(&ObstacleSpec, ObstacleMethod)>,
    grid: &FdGrid,
    theta: f64,
) -> Result<FdSolution> {
    if problem.diffusion.dim != 1 {
        return Err(CoreError::Shape(format!(
            "reference solver is one-dimensional, problem has d = {}",
            problem.diffusion.dim
        )));
    }
    if !(0.5..=1.0).contains(&theta) {
        return Err(CoreError::Grid(format!(
            "theta must lie in [1/2, 1], got {theta}"
        )));
    }
    grid.check()?;
    let n = grid.n_steps;
    let kx = grid.n_nodes;
    let dt = problem.horizon / n as f64;
    if dt * problem.driver.mu.max(0.0) >= 1.0 {
        return Err(CoreError::Grid(format!(
            "time step {dt} too large for monotonicity constant {}",
            problem.driver.mu
        )));
    }
    let dx = grid.dx();
    let xs: Vec<f64> = (0..kx).map(|k| grid.node(k)).collect();
    let ts: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();

    let mut u = vec![0.0f64; (n + 1) * kx];
    let mut multiplier = vec![0.0f64; (n + 1) * kx];
    for k in 0..kx {
        u[n * kx + k] = problem.terminal.eval(&xs[k..=k]);
    }
    // boundary data and edge slopes frozen from the terminal condition
    let bc_lo = u[n * kx];
    let bc_hi = u[n * kx + kx - 1];
    let slope_lo = (u[n * kx + 1] - u[n * kx]) / dx;
    let slope_hi = (u[n * kx + kx - 1] - u[n * kx + kx - 2]) / dx;

    let coeff_row = |t: f64| {
        let mut a = vec![0.0f64; kx];
        let mut b = vec![0.0f64; kx];
        let mut buf = [0.0f64];
        for k in 0..kx {
            let x = &xs[k..=k];
            problem.diffusion.diffusion_at(t, x, &mut buf);
            a[k] = 0.5 * buf[0] * buf[0];
            problem.diffusion.drift_at(t, x, &mut buf);
            b[k] = buf[0];
        }
        (a, b)
    };

    let sigma_grad = |t: f64, row: &[f64], out: &mut [f64]| {
        let mut buf = [0.0f64];
        for k in 0..kx {
            let d = if k == 0 {
                (row[1] - row[0]) / dx
            } else if k == kx - 1 {
                (row[kx - 1] - row[kx - 2]) / dx
            } else {
                (row[k + 1] - row[k - 1]) / (2.0 * dx)
            };
            problem.diffusion.diffusion_at(t, &xs[k..=k], &mut buf);
            out[k] = buf[0] * d;
        }
    };

    let mut barrier_violation = 0.0f64;
    let mut zbar = vec![0.0f64; kx];

    for i in (0..n).rev() {
        let th = if n - 1 - i < grid.rannacher_steps {
            1.0
        } else {
            theta
        };
        let (t_new, t_old) = (ts[i], ts[i + 1]);
        let prev = u[(i + 1) * kx..(i + 2) * kx].to_vec();

        // linear part: (I - th dt L_new) ustar = (I + (1-th) dt L_old) prev
        let (a_new, b_new) = coeff_row(t_new);
        let mut rhs = prev.clone();
        if th < 1.0 {
            let (a_old, b_old) = coeff_row(t_old);
            let c = (1.0 - th) * dt;
            for k in 1..kx - 1 {
                let (l, d, up) = stencil(a_old[k], b_old[k], dx);
                rhs[k] += c * (l * prev[k - 1] + d * prev[k] + up * prev[k + 1]);
            }
        }
        let m = kx - 2;
        let mut lower = vec![0.0f64; m];
        let mut diag = vec![0.0f64; m];
        let mut upper = vec![0.0f64; m];
        let mut b_in = vec![0.0f64; m];
        for k in 1..kx - 1 {
            let (l, d, up) = stencil(a_new[k], b_new[k], dx);
            let r = k - 1;
            lower[r] = -th * dt * l;
            diag[r] = 1.0 - th * dt * d;
            upper[r] = -th * dt * up;
            b_in[r] = rhs[k];
        }
        match grid.boundary {
            BoundaryMode::DirichletFromTerminal => {
                b_in[0] -= lower[0] * bc_lo;
                b_in[m - 1] -= upper[m - 1] * bc_hi;
            }
            BoundaryMode::ClampedGradient => {
                // u_0 = u_1 - slope_lo dx, u_{kx-1} = u_{kx-2} + slope_hi dx
                diag[0] += lower[0];
                b_in[0] += lower[0] * slope_lo * dx;
                diag[m - 1] += upper[m - 1];
                b_in[m - 1] -= upper[m - 1] * slope_hi * dx;
            }
        }
        let interior = thomas(&lower, &diag, &upper, &b_in, i)?;
        let mut ustar = vec![0.0f64; kx];
        ustar[1..kx - 1].copy_from_slice(&interior);
        match grid.boundary {
            BoundaryMode::DirichletFromTerminal => {
                // the stencil couples to the frozen terminal values; the
                // edge nodes themselves keep evolving through the driver so
                // that diffusion-free problems stay exact at every node
                ustar[0] = prev[0];
                ustar[kx - 1] = prev[kx - 1];
            }
            BoundaryMode::ClampedGradient => {
                ustar[0] = ustar[1] - slope_lo * dx;
                ustar[kx - 1] = ustar[kx - 2] + slope_hi * dx;
            }
        }

        // driver part per node, gradient argument lagged from ustar
        sigma_grad(t_old, &ustar, &mut zbar);
        let solver = NodeSolve {
            bounds: grid.value_bounds,
            t: t_new,
            step: i,
        };
        let pen = match obstacle {
            Some((_, ObstacleMethod::Penalized(npen))) => Some(npen),
            _ => None,
        };
        for k in 0..kx {
            let x = xs[k];
            let w = if th < 1.0 {
                let fz = [zbar[k]];
                ustar[k]
                    + (1.0 - th) * dt * problem.driver.eval(t_old, &xs[k..=k], ustar[k], &fz)
            } else {
                ustar[k]
            };
            let penalty = match (pen, obstacle) {
                (Some(npen), Some((obs, _))) => {
                    Some((dt * npen, obs.eval(t_new, &xs[k..=k])))
                }
                _ => None,
            };
            let mut v = solver.run(&problem.driver.f, x, zbar[k], w, th * dt, penalty)?;
            if !v.is_finite() {
                return Err(CoreError::Grid(format!(
                    "non-finite value at t = {t_new}, x = {x}"
                )));
            }
            match obstacle {
                Some((obs, ObstacleMethod::Projected)) => {
                    let h = obs.eval(t_new, &xs[k..=k]);
                    if h > v {
                        let cell = if k == 0 || k == kx - 1 { 0.5 * dx } else { dx };
                        multiplier[i * kx + k] = (h - v) * cell;
                        v = h;
                    }
                }
                Some((obs, ObstacleMethod::Penalized(npen))) => {
                    let h = obs.eval(t_new, &xs[k..=k]);
                    let push = dt * npen * (h - v).max(0.0);
                    if push != 0.0 {
                        let cell = if k == 0 || k == kx - 1 { 0.5 * dx } else { dx };
                        multiplier[i * kx + k] = push * cell;
                    }
                    barrier_violation = barrier_violation.max(h - v);
                }
                None => {}
            }
            u[i * kx + k] = v;
        }
    }

    // gradient field and contact flags over the full table
    let mut du = vec![0.0f64; (n + 1) * kx];
    for i in 0..=n {
        let row = u[i * kx..(i + 1) * kx].to_vec();
        sigma_grad(ts[i], &row, &mut du[i * kx..(i + 1) * kx]);
    }
    let mut contact = vec![false; (n + 1) * kx];
    if let Some((obs, _)) = obstacle {
        for i in 0..=n {
            for k in 0..kx {
                let h = obs.eval(ts[i], &xs[k..=k]);
                contact[i * kx + k] = u[i * kx + k] - h <= 1e-9 * (1.0 + h.abs());
            }
        }
    }
    for v in &u {
        if !v.is_finite() {
            return Err(CoreError::Grid("non-finite node in solution".into()));
        }
    }

    Ok(FdSolution {
        n_nodes: kx,
        n_steps: n,
        theta,
        ts,
        xs,
        u,
        du,
        multiplier,
        contact,
        barrier_violation: barrier_violation.max(0.0),
        method: match obstacle {
            None => "plain",
            Some((_, ObstacleMethod::Projected)) => "projected",
            Some((_, ObstacleMethod::Penalized(_))) => "penalized",
        },
    })
}

/// Backward theta-scheme for the unconstrained problem on the grid's box.
pub fn solve_pde_fd(problem: &ProblemSpec, grid: &FdGrid, theta: f64) -> Result<FdSolution> {
    sweep(problem, None, grid, theta)
}

/// Obstacle-constrained solve, fully implicit in time. The projected method
/// keeps u >= h exactly at every node and records each push as multiplier
/// mass; the penalized method adds the implicit penalty and records
/// `n (u - h)^- dt dx`.
pub fn solve_obstacle_fd(
    problem: &ProblemSpec,
    obstacle: &ObstacleSpec,
    grid: &FdGrid,
    method: ObstacleMethod,
) -> Result<FdSolution> {
    if let ObstacleMethod::Penalized(npen) = method {
        if !(npen >= 0.0) || !npen.is_finite() {
            return Err(CoreError::Shape(format!(
                "penalty level must be finite and nonnegative, got {npen}"
            )));
        }
    }
    sweep(problem, Some((obstacle, method)), grid, 1.0)
}

/// Weighted discrepancies between the reference table at its initial time
/// and a sampled backward solution at its start points.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub n_compared: usize,
    /// sqrt(sum_j rho(x_j) (u_fd(x_j) - y_j)^2) over compared points.
    pub u_distance: f64,
    /// Same for the gradient fields.
    pub z_distance: f64,
    pub fd_u_norm: f64,
    pub fd_z_norm: f64,
    /// Per compared point (y_j - u_fd(x_j)) / se_j, empty when no standard
    /// errors were supplied.
    pub z_scores: Vec<f64>,
}

impl CompareReport {
    /// Fraction of z-scores within band; 1.0 when there are none.
    pub fn within_band(&self, band: f64) -> f64 {
        if self.z_scores.is_empty() {
            return 1.0;
        }
        let ok = self.z_scores.iter().filter(|z| z.abs() <= band).count();
        ok as f64 / self.z_scores.len() as f64
    }
}

/// Compares fd u(0,.) and its gradient field against a backward solution's
/// start-point estimates, restricted to start points inside `region`, which
/// must be covered by the fd grid. `y_se` supplies per-start-point Monte
/// Carlo standard errors for z-scores; pass None to skip them.
pub fn feynman_kac_compare(
    fd: &FdSolution,
    mc: &BackwardSolution,
    weight: &WeightSpec,
    region: (f64, f64),
    y_se: Option<&[f64]>,
) -> Result<CompareReport> {
    let (lo, hi) = region;
    if !(hi > lo) {
        return Err(CoreError::RegionOutsideGrid(format!(
            "empty region [{lo}, {hi}]"
        )));
    }
    if lo < fd.xs[0] || hi > fd.xs[fd.n_nodes - 1] {
        return Err(CoreError::RegionOutsideGrid(format!(
            "region [{lo}, {hi}] exceeds grid [{}, {}]",
            fd.xs[0],
            fd.xs[fd.n_nodes - 1]
        )));
    }
    if mc.dim != 1 {
        return Err(CoreError::Shape(format!(
            "comparison is one-dimensional, backward solution has d = {}",
            mc.dim
        )));
    }
    if let Some(se) = y_se {
        if se.len() != mc.n_points {
            return Err(CoreError::Shape(format!(
                "{} standard errors for {} start points",
                se.len(),
                mc.n_points
            )));
        }
    }
    let mut u2 = 0.0;
    let mut z2 = 0.0;
    let mut fu2 = 0.0;
    let mut fz2 = 0.0;
    let mut z_scores = Vec::new();
    let mut n_compared = 0;
    for j in 0..mc.n_points {
        let x = mc.initial_points[j][0];
        if x < lo || x > hi {
            continue;
        }
        n_compared += 1;
        let w = weight.rho(&mc.initial_points[j]);
        let ufd = fd.u0(x)?;
        let zfd = fd.du0(x)?;
        let umc = mc.value_at_start(j);
        let zmc = mc.gradient_at_start(j)[0];
        u2 += w * (ufd - umc) * (ufd - umc);
        z2 += w * (zfd - zmc) * (zfd - zmc);
        fu2 += w * ufd * ufd;
        fz2 += w * zfd * zfd;
        if let Some(se) = y_se {
            z_scores.push((umc - ufd) / se[j]);
        }
    }
    Ok(CompareReport {
        n_compared,
        u_distance: u2.sqrt(),
        z_distance: z2.sqrt(),
        fd_u_norm: fu2.sqrt(),
        fd_z_norm: fz2.sqrt(),
        z_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        DiffusionSpec, DriverSpec, ObstacleSpec, ProblemSpec, TerminalSpec, WeightSpec,
    };

    fn heat_problem() -> ProblemSpec {
        ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| std::f64::consts::SQRT_2, 0.0, 0.0),
            DriverSpec::scalar(|_t, _x, _y, _z| 0.0, 0.0, 0.0, 1.0, 1.0),
            TerminalSpec::scalar(|x| (-0.5 * x * x).exp(), 1.0, 0.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        )
    }

    // g is a unit Gaussian and a = 1, so u(t,x) spreads to variance
    // 1 + 2(T - t)
    fn heat_oracle(tau: f64, x: f64) -> f64 {
        let s2 = 1.0 + 2.0 * tau;
        (-(x * x) / (2.0 * s2)).exp() / s2.sqrt()
    }

    fn bs_call() -> ProblemSpec {
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

    /// Binomial tree price of the American put, the independent oracle for
    /// the obstacle solver.
    fn binomial_american_put(s0: f64, k: f64, r: f64, sigma: f64, t: f64, n: usize) -> f64 {
        let dt = t / n as f64;
        let u = (sigma * dt.sqrt()).exp();
        let d = 1.0 / u;
        let disc = (-r * dt).exp();
        let p = ((r * dt).exp() - d) / (u - d);
        let mut v: Vec<f64> = (0..=n)
            .map(|j| (k - s0 * u.powi(j as i32) * d.powi((n - j) as i32)).max(0.0))
            .collect();
        for step in (0..n).rev() {
            for j in 0..=step {
                let s = s0 * u.powi(j as i32) * d.powi((step - j) as i32);
                let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
                v[j] = cont.max(k - s);
            }
        }
        v[0]
    }

    #[test]
    fn heat_equation_matches_the_kernel_convolution() {
        let grid = FdGrid::new(-8.0, 8.0, 401, 400);
        let sol = solve_pde_fd(&heat_problem(), &grid, 0.5).unwrap();
        let mut worst = 0.0f64;
        for k in 0..sol.n_nodes {
            worst = worst.max((sol.u_at(0, k) - heat_oracle(1.0, sol.xs[k])).abs());
        }
        assert!(worst < 1e-3, "max heat error {worst}");
    }

    #[test]
    fn clamped_gradient_boundary_also_fits_the_kernel() {
        let mut grid = FdGrid::new(-8.0, 8.0, 401, 400);
        grid.boundary = BoundaryMode::ClampedGradient;
        let sol = solve_pde_fd(&heat_problem(), &grid, 0.5).unwrap();
        let mut worst = 0.0f64;
        for k in 0..sol.n_nodes {
            worst = worst.max((sol.u_at(0, k) - heat_oracle(1.0, sol.xs[k])).abs());
        }
        assert!(worst < 1e-3, "max heat error {worst}");
    }

    #[test]
    fn refinement_improves_like_the_square_of_the_mesh() {
        let problem = heat_problem();
        let err = |nodes: usize, steps: usize| {
            let grid = FdGrid::new(-8.0, 8.0, nodes, steps);
            let sol = solve_pde_fd(&problem, &grid, 0.5).unwrap();
            let mut worst = 0.0f64;
            for k in 0..sol.n_nodes {
                worst = worst.max((sol.u_at(0, k) - heat_oracle(1.0, sol.xs[k])).abs());
            }
            worst
        };
        let e0 = err(51, 50);
        let e1 = err(101, 100);
        let e2 = err(201, 200);
        assert!(e1 < e0 / 2.5, "coarse {e0}, halved {e1}");
        assert!(e2 < e1 / 2.5, "halved {e1}, quartered {e2}");
    }

    #[test]
    fn cubic_decay_hits_the_ode_at_every_node_and_level() {
        let problem = ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0),
            DriverSpec::scalar(|_t, _x, y, _z| -y * y * y, 0.0, 0.0, 1.0, 3.0),
            TerminalSpec::scalar(|_| 1.0, 1.0, 0.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        );
        let mut grid = FdGrid::new(0.0, 1.0, 5, 2000);
        grid.rannacher_steps = 0;
        let sol = solve_pde_fd(&problem, &grid, 0.5).unwrap();
        for i in 0..=sol.n_steps {
            let exact = 1.0 / (1.0 + 2.0 * (1.0 - sol.ts[i])).sqrt();
            for k in 0..sol.n_nodes {
                let err = (sol.u_at(i, k) - exact).abs();
                assert!(err < 1e-6, "node {k} level {i}: err {err}");
            }
        }
    }

    #[test]
    fn black_scholes_call_within_a_tenth_of_a_percent() {
        // frozen closed-form values at x = 100
        let price = 10.450583572185565;
        let zref = 12.736613023512382;
        let grid = FdGrid::new(0.0, 400.0, 400, 400);
        let sol = solve_pde_fd(&bs_call(), &grid, 0.5).unwrap();
        let u = sol.u0(100.0).unwrap();
        assert!(
            (u - price).abs() / price < 1e-3,
            "fd {u} vs closed form {price}"
        );
        let z = sol.du0(100.0).unwrap();
        assert!((z - zref).abs() / zref < 0.02, "fd z {z} vs {zref}");
    }

    #[test]
    fn inactive_obstacle_reproduces_the_plain_solve_bitwise() {
        let mut problem = american_put();
        problem.obstacle = None;
        let far = ObstacleSpec::scalar(|_t, _x| -1e9, 1e9, 0.0);
        let grid = FdGrid::new(0.0, 300.0, 61, 50);
        let plain = solve_pde_fd(&problem, &grid, 1.0).unwrap();
        let proj = solve_obstacle_fd(&problem, &far, &grid, ObstacleMethod::Projected).unwrap();
        let pen =
            solve_obstacle_fd(&problem, &far, &grid, ObstacleMethod::Penalized(1e4)).unwrap();
        for (a, b) in plain.u.iter().zip(&proj.u) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in plain.u.iter().zip(&pen.u) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(proj.total_multiplier_mass(), 0.0);
        assert_eq!(pen.total_multiplier_mass(), 0.0);
    }

    #[test]
    fn american_put_within_a_quarter_percent_of_the_binomial_tree() {
        let oracle = binomial_american_put(100.0, 100.0, 0.06, 0.4, 0.5, 2000);
        assert!((oracle - 9.944369531486105).abs() < 1e-9);
        let problem = american_put();
        let obstacle = problem.obstacle.clone().unwrap();
        let grid = FdGrid::new(0.0, 400.0, 401, 800);
        let sol =
            solve_obstacle_fd(&problem, &obstacle, &grid, ObstacleMethod::Projected).unwrap();
        let u = sol.u0(100.0).unwrap();
        assert!(
            (u - oracle).abs() / oracle < 2.5e-3,
            "fd {u} vs binomial {oracle}"
        );
        assert_eq!(sol.barrier_violation, 0.0);
    }

    #[test]
    fn projection_localizes_the_multiplier_on_the_contact_set() {
        let problem = american_put();
        let obstacle = problem.obstacle.clone().unwrap();
        let grid = FdGrid::new(0.0, 300.0, 121, 100);
        let sol =
            solve_obstacle_fd(&problem, &obstacle, &grid, ObstacleMethod::Projected).unwrap();
        assert!(sol.total_multiplier_mass() > 0.0);
        for i in 0..=sol.n_steps {
            for k in 0..sol.n_nodes {
                let mass = sol.multiplier[i * sol.n_nodes + k];
                assert!(mass >= 0.0);
                if mass > 0.0 {
                    let h = (100.0 - sol.xs[k]).max(0.0);
                    assert_eq!(sol.u_at(i, k), h, "mass off the contact set");
                    assert!(sol.contact[i * sol.n_nodes + k]);
                }
                let h = (100.0 - sol.xs[k]).max(0.0);
                assert!(sol.u_at(i, k) >= h);
            }
        }
    }

    #[test]
    fn discrete_comparison_is_exact_at_full_implicitness() {
        // ordered terminal data and ordered z-free drivers, shared bracket
        let make = |bump: f64, shift: f64| {
            ProblemSpec::new(
                DiffusionSpec::scalar(|_, _| 0.3, |_, _| 1.0, 0.0, 0.0),
                DriverSpec::scalar(move |_t, _x, y, _z| -y - shift, 0.0, 0.0, 1.0, 1.0),
                TerminalSpec::scalar(move |x| (-0.5 * x * x).exp() + bump, 2.0, 0.0),
                None,
                WeightSpec::Polynomial { p: 3.0 },
                1.0,
            )
        };
        let mut grid = FdGrid::new(-3.0, 3.0, 61, 40);
        grid.value_bounds = Some((-20.0, 20.0));
        let low = solve_pde_fd(&make(0.0, 0.2), &grid, 1.0).unwrap();
        let high = solve_pde_fd(&make(0.5, 0.0), &grid, 1.0).unwrap();
        for (a, b) in low.u.iter().zip(&high.u) {
            assert!(a <= b, "comparison violated: {a} > {b}");
        }
    }

    #[test]
    fn obstacle_runs_dominate_the_unconstrained_solve_exactly() {
        let problem = american_put();
        let obstacle = problem.obstacle.clone().unwrap();
        let mut plain_problem = problem.clone();
        plain_problem.obstacle = None;
        let mut grid = FdGrid::new(0.0, 300.0, 61, 50);
        grid.value_bounds = Some((-50.0, 250.0));
        let plain = solve_pde_fd(&plain_problem, &grid, 1.0).unwrap();
        let proj =
            solve_obstacle_fd(&problem, &obstacle, &grid, ObstacleMethod::Projected).unwrap();
        for (a, b) in plain.u.iter().zip(&proj.u) {
            assert!(b >= a, "dominance violated: {b} < {a}");
        }
    }

    #[test]
    fn penalized_values_climb_with_the_penalty_toward_the_projection() {
        let problem = american_put();
        let obstacle = problem.obstacle.clone().unwrap();
        let mut grid = FdGrid::new(0.0, 300.0, 121, 200);
        grid.value_bounds = Some((-50.0, 250.0));
        let pen: Vec<FdSolution> = [100.0, 1000.0, 10000.0]
            .iter()
            .map(|n| {
                solve_obstacle_fd(&problem, &obstacle, &grid, ObstacleMethod::Penalized(*n))
                    .unwrap()
            })
            .collect();
        for w in pen.windows(2) {
            for (a, b) in w[0].u.iter().zip(&w[1].u) {
                assert!(b >= a, "penalty monotonicity violated: {b} < {a}");
            }
        }
        let proj =
            solve_obstacle_fd(&problem, &obstacle, &grid, ObstacleMethod::Projected).unwrap();
        let mut gap = 0.0f64;
        for (a, b) in pen[2].u.iter().zip(&proj.u) {
            gap = gap.max((a - b).abs());
        }
        assert!(gap < 1e-3, "gap between strong penalty and projection {gap}");
        assert!(pen[0].barrier_violation > pen[2].barrier_violation);
    }

    #[test]
    fn comparison_report_is_zero_on_identical_fields() {
        let grid = FdGrid::new(0.0, 400.0, 101, 50);
        let sol = solve_pde_fd(&bs_call(), &grid, 1.0).unwrap();
        let points: Vec<Vec<f64>> = vec![vec![80.0], vec![100.0], vec![120.0]];
        let n_points = points.len();
        let y: Vec<f64> = points.iter().map(|p| sol.u0(p[0]).unwrap()).collect();
        let z: Vec<f64> = points.iter().map(|p| sol.du0(p[0]).unwrap()).collect();
        let mc = BackwardSolution {
            n_points,
            paths_per_point: 1,
            n_steps: 1,
            dim: 1,
            initial_points: points,
            y: [y.clone(), y].concat(),
            z: [z.clone(), z].concat(),
            k: vec![0.0; 2 * n_points],
            coeffs: vec![],
            rank_deficient_steps: vec![],
            max_step_residual: 0.0,
            mode: "plain",
            theta: 1.0,
            basis: crate::basis::BasisSpec::default_for_dim(1),
        };
        let report = feynman_kac_compare(
            &sol,
            &mc,
            &WeightSpec::Polynomial { p: 3.0 },
            (70.0, 130.0),
            None,
        )
        .unwrap();
        assert_eq!(report.n_compared, 3);
        assert_eq!(report.u_distance, 0.0);
        assert_eq!(report.z_distance, 0.0);
        assert!(report.fd_u_norm > 0.0);

        let err = feynman_kac_compare(
            &sol,
            &mc,
            &WeightSpec::Polynomial { p: 3.0 },
            (-10.0, 500.0),
            None,
        );
        assert!(matches!(err, Err(CoreError::RegionOutsideGrid(_))));
    }

    #[test]
    fn grid_validation_rejects_degenerate_setups() {
        let problem = heat_problem();
        assert!(matches!(
            solve_pde_fd(&problem, &FdGrid::new(0.0, 1.0, 2, 10), 1.0),
            Err(CoreError::Grid(_))
        ));
        assert!(matches!(
            solve_pde_fd(&problem, &FdGrid::new(0.0, 1.0, 11, 0), 1.0),
            Err(CoreError::Grid(_))
        ));
        assert!(matches!(
            solve_pde_fd(&problem, &FdGrid::new(0.0, 1.0, 11, 10), 0.3),
            Err(CoreError::Grid(_))
        ));
        // an explosive monotonicity constant needs a finer time grid
        let bad = ProblemSpec::new(
            DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0),
            DriverSpec::scalar(|_t, _x, y, _z| 20.0 * y, 20.0, 0.0, 1.0, 1.0),
            TerminalSpec::scalar(|_| 1.0, 1.0, 0.0),
            None,
            WeightSpec::Polynomial { p: 3.0 },
            1.0,
        );
        assert!(matches!(
            solve_pde_fd(&bad, &FdGrid::new(0.0, 1.0, 11, 10), 1.0),
            Err(CoreError::Grid(_))
        ));
    }
}
