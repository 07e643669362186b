use thiserror::Error;

/// Errors surfaced by the solvers and validators.
///
/// Variants carry enough location detail (path indices, grid nodes, probe
/// points) to reproduce the failure; messages never truncate the offending
/// coordinates.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A declared assumption failed at a sampled probe point.
    #[error("ill-posed spec: {function} violated near {probe}: {detail}")]
    IllPosedSpec {
        function: String,
        probe: String,
        detail: String,
    },

    /// The forward simulation produced a non-finite state.
    #[error("non-finite state at initial point {j}, path {m}, step {i}")]
    NonFiniteState { j: usize, m: usize, i: usize },

    /// A time grid is unusable for the requested problem.
    #[error("invalid time grid: {0}")]
    Grid(String),

    /// The scalar root-finder could not bracket a root; under the declared
    /// monotonicity bound this means the step size condition is violated or
    /// the driver is not what it claims to be.
    #[error("root bracketing failed in {location}: {detail}")]
    NoBracket { location: String, detail: String },

    /// Picard iteration produced non-decreasing successive differences.
    #[error("no contraction: successive differences {diffs:?} did not decrease over 3 iterations")]
    NoContraction { diffs: Vec<f64> },

    /// A norm or ratio was requested for an identically-zero test function.
    #[error("degenerate test function: {0}")]
    DegenerateTestFunction(String),

    /// Projected relaxation sweeps did not reach tolerance.
    #[error("projected relaxation did not converge at time step {step} after {sweeps} sweeps (residual {residual:e})")]
    SorDiverged {
        step: usize,
        sweeps: usize,
        residual: f64,
    },

    /// The implicit space operator lost diagonal dominance.
    #[error("tridiagonal solve unstable at time step {step}: {detail}")]
    Tridiagonal { step: usize, detail: String },

    /// A comparison region does not overlap the grid it is compared against.
    #[error("region {0} lies outside the solved grid")]
    RegionOutsideGrid(String),

    /// Mismatched shapes between cooperating objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Expression source could not be parsed or evaluated.
    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
