//! Semidefinite programming: problem data, a small ADMM solver and SDPA I/O.

pub mod admm;
pub mod builders;
pub mod model;
pub mod problem;
pub mod sdpa;

pub use admm::{admm_solve, AdmmSettings, SdpSolution, SdpStatus};
pub use problem::{BlockSym, Entry, SdpProblem};
pub use sdpa::{export_sdpa, parse_sdpa, parse_sdpa_str, to_sdpa_string, write_sdpa};
pub use model::{Compiled, LinExpr, MatVar, Model, SymExpr};
pub use builders::{
    build_piecewise_quadratic_expectation, build_poly_cvar, build_poly_var, build_quad_cvar, build_quad_var, build_tracking_error,
    build_wc_expectation, build_wc_probability, LossSpec, PolyhedralLoss, ProblemDescription, QuadraticEvent, QuadraticLoss,
    QuadraticPiece,
};

use crate::error::{Error, Result};

/// Solves `p` and returns its optimal value, or [`Error::SolverDidNotConverge`].
pub fn solve_value(p: &SdpProblem, settings: &AdmmSettings) -> Result<f64> {
    let sol = admm_solve(p, settings)?;
    if !sol.is_optimal() {
        return Err(Error::SolverDidNotConverge { iterations: sol.iterations, residual: sol.primal_residual.max(sol.dual_residual) });
    }
    Ok(sol.primal_value)
}
