//! Dense linear algebra: Cholesky solves, normal-equation least squares and a
//! small primal active-set QP solver.

mod dense;
mod nnls;
mod qp;

pub use dense::{dot, least_squares, norm, norm_inf, spd_solve, symmetric_eigenvalues, DenseMatrix};
pub use nnls::{nnls, NnlsSolution};
pub use qp::{solve_qp, solve_qp_from, QpOptions, QpProblem, QpSolution};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("problem is not strictly convex on the working set (singular KKT system)")]
    NotConvex,
    #[error("constraints are infeasible; constraint {constraint} violated by {violation:.3e}")]
    Infeasible { constraint: ConstraintRef, violation: f64 },
    #[error("no convergence after {iterations} iterations")]
    MaxIterations { iterations: usize, x: Vec<f64> },
    #[error("starting point is infeasible")]
    InfeasibleStart,
}

/// Identifies a constraint row in a [`QpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRef {
    Equality(usize),
    Inequality(usize),
}

impl std::fmt::Display for ConstraintRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintRef::Equality(i) => write!(f, "eq[{i}]"),
            ConstraintRef::Inequality(i) => write!(f, "ineq[{i}]"),
        }
    }
}

pub type Result<T> = std::result::Result<T, LinalgError>;
