//! Weighted energy-dissipation (WED) approximation of gradient flows.
//!
//! A gradient flow `u' = −∇φ(u)` from `x̄` is recovered as the ε → 0 limit of
//! minimizers of
//!
//! ```text
//! I_ε(u) = ∫₀^∞ e^{−t/ε} ( ε/2 |u'|² + φ(u) ) dt / ε,   u(0) = x̄,
//! ```
//!
//! and the minimal value `V_ε(x̄)` is a value function with its own dynamic
//! programming principle and Hamilton–Jacobi equation. The crate provides
//! the spaces and energies, discrete trajectories and quadrature, two WED
//! solvers, value-function diagnostics, and classical reference flows.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod io;
pub mod numeric;
pub mod reference;
pub mod report;
pub mod space;
pub mod trajectory;
pub mod value;
pub mod wed;

pub use energy::{local_slope, yosida, Coercivity, EnergyKind, EnergySpec, SlopeEstimate, SlopeMethod, Yosida};
pub use error::{Result, WedError};
pub use reference::{
    convergence_study, exact_flow, lambda_diagnostics, minimizing_movements, ConvergenceRow, ConvergenceTable,
    LambdaDiagnostics,
};
pub use report::IdentityReport;
pub use space::{Point, SpaceSpec};
pub use trajectory::{GridMode, TimeGrid, Trajectory};
pub use value::{finsler_distance, value_function, ValueCache};
pub use wed::{solve, SolverKind, WedProblem, WedSolution};
