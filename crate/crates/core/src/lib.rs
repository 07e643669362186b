//! Numerical realization of backward SDEs and reflected backward SDEs with
//! monotone drivers, together with the deterministic objects they represent:
//! viscosity solutions of semilinear parabolic PDEs and of parabolic obstacle
//! problems, plus the reflecting measure carried by the obstacle constraint.
//!
//! The pipeline is: describe a problem ([`model`]), simulate forward paths on
//! a time grid ([`sde`]), run a regression Monte Carlo backward sweep with an
//! implicit monotone y-step ([`bsde`]), optionally reflect or penalize against
//! an obstacle and reconstruct the constraint measure ([`rbsde`]), and check
//! everything against a deterministic finite-difference oracle ([`fd`]) and
//! weighted-norm diagnostics ([`norms`]).

pub mod basis;
pub mod bsde;
pub mod error;
pub mod expr;
pub mod fd;
pub mod model;
pub mod norms;
pub mod rbsde;
pub mod rng;
pub mod sde;

pub use basis::{BasisSpec, Regression};
pub use bsde::{picard_solve, solve_bsde, BackwardSolution, PicardOpts, PicardReport, SolveOpts};
pub use error::CoreError;
pub use fd::{
    feynman_kac_compare, solve_obstacle_fd, solve_pde_fd, BoundaryMode, CompareReport, FdGrid,
    FdSolution, ObstacleMethod,
};
pub use model::{
    exponential_shift, validate_problem, DiffusionSpec, DriverSpec, ObstacleSpec, ProbePlan,
    ProblemSpec, TerminalSpec, ValidationReport, WeightSpec,
};
pub use norms::{
    equivalence_ratio, flow_ratio_estimate, Field2d, FlowDiagnostics, FlowSample, NormLattice,
    NormReport,
};
pub use rbsde::{
    estimate_measure, skorokhod_residual, solve_rbsde_penalized, solve_rbsde_reflected,
    weighted_mean_terminal_k, AprioriReport, MeasureEstimate, PenaltySchedule,
};
pub use sde::{simulate_bundle, simulate_bundle_stream, PathBundle, TimeGrid};

/// Convenience alias used throughout: everything is double precision.
pub type Result<T> = std::result::Result<T, CoreError>;
