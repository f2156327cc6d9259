//! The equality-constrained estimation problem, its Lagrangian and bordered
//! Hessian, and a Newton–KKT solver.

pub mod derivcheck;
pub mod lagrangian;
pub mod problem;
pub mod reduced;
pub mod solver;

pub use derivcheck::{check_derivatives, DerivativeReport};
pub use lagrangian::{assemble_bordered_hessian, eval_lagrangian, BorderedHessian};
pub use problem::{quadratic_toy, ConstrainedProblem, FnProblem, VariablePartition};
pub use solver::{solve_equality_constrained, KktSolution, SolveStatus, SolverOptions};
