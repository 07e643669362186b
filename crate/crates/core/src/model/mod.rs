//! Problem descriptions: forward diffusion, driver, terminal condition,
//! obstacle, and integration weight, each carrying the analytic metadata
//! (Lipschitz bounds, monotonicity constant, growth envelopes) that the
//! solvers and validators rely on.
//!
//! Functions are stored as shared closures so specs stay cheap to clone and
//! can be built either from native code (scenario registry) or from parsed
//! expressions (config files). All declared constants are *claims*; the
//! validator samples them (`validate_problem`) and the solvers trust them.

mod transform;
mod validate;

pub use transform::{exponential_shift, pi_n, truncate_obstacle, truncate_terminal_and_driver};
pub use validate::{validate_problem, CheckResult, ProbePlan, ValidationReport};

use std::fmt;
use std::sync::Arc;

/// Drift or other vector field: writes `b(t,x)` into `out` (length `dim`).
pub type VectorField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Diffusion matrix field: writes row-major `sigma(t,x)` into `out`
/// (length `dim * dim`).
pub type MatrixField = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
/// Scalar field of (t, x), e.g. an obstacle.
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Terminal payoff g(x).
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Driver f(t, x, y, z) with z of length `dim`.
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;

/// Forward diffusion dX = b(t,X) dt + sigma(t,X) dB with declared Lipschitz
/// bounds in x for both coefficient fields.
#[derive(Clone)]
pub struct DiffusionSpec {
    pub dim: usize,
    pub drift: VectorField,
    pub diffusion: MatrixField,
    /// Declared bound on |b(t,x)-b(t,x')| / |x-x'|.
    pub lip_drift: f64,
    /// Declared bound on |sigma(t,x)-sigma(t,x')|_F / |x-x'|.
    pub lip_diffusion: f64,
}

impl DiffusionSpec {
    pub fn new(
        dim: usize,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        lip_drift: f64,
        lip_diffusion: f64,
    ) -> Self {
        assert!(dim >= 1, "diffusion dimension must be at least 1");
        Self {
            dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            lip_drift,
            lip_diffusion,
        }
    }

    /// One-dimensional convenience constructor from scalar coefficients.
    pub fn scalar(
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        lip_drift: f64,
        lip_diffusion: f64,
    ) -> Self {
        Self::new(
            1,
            move |t, x, out| out[0] = b(t, x[0]),
            move |t, x, out| out[0] = sigma(t, x[0]),
            lip_drift,
            lip_diffusion,
        )
    }

    pub fn drift_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out);
    }

    pub fn diffusion_at(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out);
    }
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("lip_drift", &self.lip_drift)
            .field("lip_diffusion", &self.lip_diffusion)
            .finish_non_exhaustive()
    }
}

/// Driver f(t,x,y,z) with its declared structure constants:
/// `mu` is the one-sided monotonicity constant,
/// `(y-y')(f(..y..) - f(..y'..)) <= mu (y-y')^2`;
/// `zlip` is the Lipschitz constant in z;
/// `(kappa1, beta1)` declare the growth envelope
/// `|f(t,x,y,0)| <= |f(t,x,0,0)| + kappa1 (1 + |y|^beta1)`.
#[derive(Clone)]
pub struct DriverSpec {
    pub f: DriverFn,
    pub mu: f64,
    pub zlip: f64,
    pub kappa1: f64,
    pub beta1: f64,
    /// Declares that (t,x) -> f(t,x,0,0) is square-integrable under the
    /// problem weight; the validator can only sample finiteness.
    pub base_sq_integrable: bool,
}

impl DriverSpec {
    pub fn new(
        f: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
        mu: f64,
        zlip: f64,
        kappa1: f64,
        beta1: f64,
    ) -> Self {
        Self {
            f: Arc::new(f),
            mu,
            zlip,
            kappa1,
            beta1,
            base_sq_integrable: true,
        }
    }

    /// One-dimensional convenience constructor (scalar x and z).
    pub fn scalar(
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        mu: f64,
        zlip: f64,
        kappa1: f64,
        beta1: f64,
    ) -> Self {
        Self::new(
            move |t, x, y, z| f(t, x[0], y, z[0]),
            mu,
            zlip,
            kappa1,
            beta1,
        )
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.f)(t, x, y, z)
    }

    /// Growth envelope phi(r) = kappa1 (1 + r^beta1).
    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        self.kappa1 * (1.0 + r.powf(self.beta1))
    }
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("mu", &self.mu)
            .field("zlip", &self.zlip)
            .field("kappa1", &self.kappa1)
            .field("beta1", &self.beta1)
            .field("base_sq_integrable", &self.base_sq_integrable)
            .finish_non_exhaustive()
    }
}

/// Terminal condition g with declared polynomial growth
/// |g(x)| <= kappa (1 + |x|^beta).
#[derive(Clone)]
pub struct TerminalSpec {
    pub g: TerminalFn,
    pub kappa: f64,
    pub beta: f64,
}

impl TerminalSpec {
    pub fn new(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, kappa: f64, beta: f64) -> Self {
        Self {
            g: Arc::new(g),
            kappa,
            beta,
        }
    }

    pub fn scalar(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        kappa: f64,
        beta: f64,
    ) -> Self {
        Self::new(move |x| g(x[0]), kappa, beta)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalSpec")
            .field("kappa", &self.kappa)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// Lower obstacle h(t,x) with declared polynomial growth
/// |h(t,x)| <= kappa (1 + |x|^beta); compatibility h(T,x) <= g(x) is a
/// validated invariant, not a constructor precondition.
#[derive(Clone)]
pub struct ObstacleSpec {
    pub h: ScalarField,
    pub kappa: f64,
    pub beta: f64,
}

impl ObstacleSpec {
    pub fn new(
        h: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        kappa: f64,
        beta: f64,
    ) -> Self {
        Self {
            h: Arc::new(h),
            kappa,
            beta,
        }
    }

    pub fn scalar(
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        kappa: f64,
        beta: f64,
    ) -> Self {
        Self::new(move |t, x| h(t, x[0]), kappa, beta)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.h)(t, x)
    }
}

impl fmt::Debug for ObstacleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObstacleSpec")
            .field("kappa", &self.kappa)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// Integration weight over space. Norms, measure totals, and Picard
/// diagnostics all integrate against this density.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// rho(x) = (1 + |x|)^(-p); integrable over R^d when p > d.
    Polynomial { p: f64 },
    /// rho(x) = exp(alpha |x|); integrable when alpha < 0.
    Exponential { alpha: f64 },
}

impl WeightSpec {
    #[inline]
    pub fn rho(&self, x: &[f64]) -> f64 {
        let r = norm2(x);
        match self {
            WeightSpec::Polynomial { p } => (1.0 + r).powf(-p),
            WeightSpec::Exponential { alpha } => (alpha * r).exp(),
        }
    }

    /// Whether the weight has finite mass over R^d.
    pub fn integrable(&self, dim: usize) -> bool {
        match self {
            WeightSpec::Polynomial { p } => *p > dim as f64,
            WeightSpec::Exponential { alpha } => *alpha < 0.0,
        }
    }

    /// Minimal admissible polynomial exponent in the presence of an obstacle
    /// with growth beta, given the driver growth exponent beta1:
    /// p >= beta1*beta + beta + d + 1.
    pub fn required_obstacle_exponent(beta1: f64, beta: f64, dim: usize) -> f64 {
        beta1 * beta + beta + dim as f64 + 1.0
    }
}

#[inline]
pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A complete problem: diffusion, driver, terminal condition, optional lower
/// obstacle, weight, and horizon T > 0.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub diffusion: DiffusionSpec,
    pub driver: DriverSpec,
    pub terminal: TerminalSpec,
    pub obstacle: Option<ObstacleSpec>,
    pub weight: WeightSpec,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        diffusion: DiffusionSpec,
        driver: DriverSpec,
        terminal: TerminalSpec,
        obstacle: Option<ObstacleSpec>,
        weight: WeightSpec,
        horizon: f64,
    ) -> Self {
        assert!(
            horizon > 0.0 && horizon.is_finite(),
            "horizon must be positive and finite"
        );
        Self {
            diffusion,
            driver,
            terminal,
            obstacle,
            weight,
            horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim
    }
}
