//! Mixed-integer modelling and a branch-and-bound solver for convex MIQPs
//! with binary integer variables.

mod bnb;
mod model;
mod mps;
mod relax;

pub use bnb::{
    solve, solve_with, Assignment, MipSolution, PrimalHeuristic, SolveLimits, SolveOptions,
    SolveStats, SolveStatus,
};
pub use model::{
    validate, AffineExpr, LinearConstraint, MipModel, Objective, Relation, VarId, VarKind,
    Variable, Violation, ViolationKind, FEAS_TOL, INT_TOL,
};
pub use mps::write_mps;
pub use relax::{solve_relaxation, Relaxation, RelaxationStatus, KKT_TOL};
