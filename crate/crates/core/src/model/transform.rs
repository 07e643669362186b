//! Structure-preserving problem transforms: the exponential shift that
//! removes a positive monotonicity constant, and the bounded truncations used
//! to tame terminal data, driver base value, and obstacle before solving.

use super::{DriverSpec, ObstacleSpec, ProblemSpec, TerminalSpec};
use std::sync::Arc;

/// Symmetric truncation at level n: the identity on [-n, n], clamped outside.
/// Defined for every y (including 0, where the ratio form is singular).
#[inline]
pub fn pi_n(n: f64, y: f64) -> f64 {
    y.clamp(-n, n)
}

/// Shifts the problem by `mu_shift`:
/// terminal `g -> e^(mu T) g`, obstacle `h -> e^(mu t) h`, driver
/// `f -> e^(mu t) f(t, x, e^(-mu t) y, e^(-mu t) z) - mu y`.
///
/// Solutions map as `Y -> e^(mu t) Y`, `Z -> e^(mu t) Z`, so solving the
/// shifted problem and scaling back by `e^(-mu t)` recovers the original.
/// Shifting by the driver's own monotonicity constant leaves a driver whose
/// monotonicity constant is 0; shifting by mu then -mu is the identity on
/// function values. Growth metadata is updated conservatively (a valid
/// envelope, not a tight one); the z-Lipschitz constant is exact.
pub fn exponential_shift(spec: &ProblemSpec, mu_shift: f64) -> ProblemSpec {
    let t_end = spec.horizon;
    let d = spec.dim();

    let g = spec.terminal.g.clone();
    let gfac = (mu_shift * t_end).exp();
    let terminal = TerminalSpec {
        g: Arc::new(move |x: &[f64]| gfac * g(x)),
        kappa: spec.terminal.kappa * gfac,
        beta: spec.terminal.beta,
    };

    let f = spec.driver.f.clone();
    let driver_fn = move |t: f64, x: &[f64], y: f64, z: &[f64]| -> f64 {
        let up = (mu_shift * t).exp();
        let down = 1.0 / up;
        // Scale z without heap traffic for the usual small dimensions.
        let mut stack = [0.0f64; 8];
        let mut heap;
        let zs: &[f64] = if d <= 8 {
            for (s, v) in stack[..d].iter_mut().zip(z) {
                *s = down * v;
            }
            &stack[..d]
        } else {
            heap = z.to_vec();
            for v in &mut heap {
                *v *= down;
            }
            &heap
        };
        up * f(t, x, down * y, zs) - mu_shift * y
    };
    let grow = (mu_shift.max(0.0) * t_end).exp();
    let driver = DriverSpec {
        f: Arc::new(driver_fn),
        mu: spec.driver.mu - mu_shift,
        zlip: spec.driver.zlip,
        kappa1: grow * spec.driver.kappa1 + mu_shift.abs(),
        beta1: spec.driver.beta1.max(1.0),
        base_sq_integrable: spec.driver.base_sq_integrable,
    };

    let obstacle = spec.obstacle.as_ref().map(|obs| {
        let h = obs.h.clone();
        ObstacleSpec {
            h: Arc::new(move |t: f64, x: &[f64]| (mu_shift * t).exp() * h(t, x)),
            kappa: obs.kappa * grow,
            beta: obs.beta,
        }
    });

    ProblemSpec {
        diffusion: spec.diffusion.clone(),
        driver,
        terminal,
        obstacle,
        weight: spec.weight.clone(),
        horizon: t_end,
    }
}

/// Truncates the terminal condition to [-lower, upper] and replaces the
/// driver's base value by its clamped version:
/// `f -> f - f(t,x,0,0) + clamp(f(t,x,0,0))`, leaving the y and z dependence
/// (and hence the monotonicity and z-Lipschitz constants) untouched.
///
/// The symmetric truncation of the spec literature is the special case
/// `lower == upper` (see [`pi_n`]). Applying the transform twice gives
/// bitwise the same functions as applying it once: the adjustment vanishes
/// identically once the base value lies inside the bounds.
pub fn truncate_terminal_and_driver(spec: &ProblemSpec, upper: f64, lower: f64) -> ProblemSpec {
    assert!(
        upper >= 0.0 && lower >= 0.0,
        "truncation levels must be nonnegative"
    );
    let g = spec.terminal.g.clone();
    let terminal = TerminalSpec {
        g: Arc::new(move |x: &[f64]| g(x).clamp(-lower, upper)),
        kappa: spec.terminal.kappa.min(upper.max(lower)),
        beta: spec.terminal.beta,
    };

    let f = spec.driver.f.clone();
    let zero = vec![0.0f64; spec.dim()];
    let driver_fn = move |t: f64, x: &[f64], y: f64, z: &[f64]| -> f64 {
        let base = f(t, x, 0.0, &zero);
        let val = f(t, x, y, z);
        // Branching keeps the no-op case bitwise exact, which makes the
        // transform idempotent in floating point, not just on paper.
        if base > upper {
            val - base + upper
        } else if base < -lower {
            val - base - lower
        } else {
            val
        }
    };
    let driver = DriverSpec {
        f: Arc::new(driver_fn),
        mu: spec.driver.mu,
        zlip: spec.driver.zlip,
        kappa1: spec.driver.kappa1,
        beta1: spec.driver.beta1,
        base_sq_integrable: true,
    };

    ProblemSpec {
        diffusion: spec.diffusion.clone(),
        driver,
        terminal,
        obstacle: spec.obstacle.clone(),
        weight: spec.weight.clone(),
        horizon: spec.horizon,
    }
}

/// Truncates the obstacle from above: `h -> min(h, n)`. Growth constants
/// remain valid envelopes and are kept.
pub fn truncate_obstacle(obstacle: &ObstacleSpec, n: f64) -> ObstacleSpec {
    assert!(n >= 0.0, "obstacle truncation level must be nonnegative");
    let h = obstacle.h.clone();
    ObstacleSpec {
        h: Arc::new(move |t: f64, x: &[f64]| h(t, x).min(n)),
        kappa: obstacle.kappa,
        beta: obstacle.beta,
    }
}
