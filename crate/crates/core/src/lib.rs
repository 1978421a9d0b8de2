//! Minimal solutions, pull-in voltage and linear stability for the
//! boundary-degenerate MEMS equation
//!
//! ```text
//! −Δu = λ / (a − u)²  in B₁(0) ⊂ ℝᴺ,   u = 0 on ∂B₁,   a(x) = κ(1 − |x|²)^γ.
//! ```
//!
//! The solver works on radial functions over a graded mesh clustered at the
//! boundary, where the membrane touches the ground plate.
//!
//! - [`grid`]: mesh, profile, decay gauge
//! - [`green`]: radial Green operator and the kernel decay estimates
//! - [`solver`]: monotone iteration, branches, boundary decay fits
//! - [`pullin`]: pull-in voltage bracketing and analytic bounds
//! - [`stability`]: linearized operator, ground state, energy diagnostics
//! - [`report`]: JSON/CSV records
//! - [`acceptance`]: the verification checks bundled by the `verify` command

// `!(x > 0.0)` style guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod acceptance;
pub mod error;
pub mod green;
pub mod grid;
pub mod pullin;
mod quadrature;
pub mod report;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use green::{apply_green, kernel_ratio_report, GreenOperator, KernelRatioReport};
pub use grid::{
    build_grid, decay_gauge, profile_eval, GridFunction, GridSignature, ProblemParams, RadialGrid,
};
pub use pullin::{analytic_upper_bound, pullin_bisect, PullInEstimate};
pub use solver::{branch_sweep, iterate_minimal, Branch, DecayFit, IterationOutcome, Status};
pub use stability::{
    assemble_linearized, energy_diagnostics, hardy_constant_estimate, smallest_eigenpair, EigenResult,
    EnergyDiagnostics, LinearizedOperator,
};
