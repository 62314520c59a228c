//! Small-instance LP and MILP solving.
//!
//! Problems are built through [`LpProblem`] / [`MilpProblem`] and solved by a
//! dense bounded-variable revised simplex ([`solve_lp`]) or a best-first
//! branch-and-bound over binary variables ([`solve_milp`]). Everything is
//! deterministic: identical inputs give bit-identical outputs.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod lp_format;
mod milp;
mod problem;
mod simplex;

pub use error::SolverError;
pub use lp_format::write_lp;
pub use milp::{solve_milp, MilpProblem, Sos2Group};
pub use problem::{Constraint, LpProblem, Sense, VarId, Variable};
pub use simplex::solve_lp;

use std::time::Duration;

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Outcome of [`solve_lp`] or [`solve_milp`].
///
/// `objective` and `values` are meaningful only when `status` is
/// [`SolveStatus::Optimal`]; otherwise `values` is empty and `objective` is NaN.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Simplex pivots (summed over all nodes for a MILP).
    pub iterations: usize,
    /// Branch-and-bound nodes processed; 1 for a pure LP.
    pub nodes: usize,
    pub solve_time: Duration,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.index()]
    }

    pub(crate) fn without_solution(status: SolveStatus, iterations: usize, nodes: usize, solve_time: Duration) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            iterations,
            nodes,
            solve_time,
        }
    }
}

/// Numerical tolerances and limits shared by the LP and MILP solvers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Smallest |entry| of the entering column accepted as a pivot.
    pub pivot_tol: f64,
    /// Maximum primal residual (row or bound violation) of a reported optimum.
    pub feasibility_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality_tol: f64,
    pub max_iterations: usize,
    /// Pivots between full refactorizations of the basis inverse.
    pub refactor_interval: usize,
    pub node_limit: usize,
    /// Distance from 0/1 under which a binary counts as integral.
    pub integrality_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-10,
            feasibility_tol: 1e-8,
            optimality_tol: 1e-9,
            max_iterations: 200_000,
            refactor_interval: 64,
            node_limit: 1_000_000,
            integrality_tol: 1e-9,
        }
    }
}
