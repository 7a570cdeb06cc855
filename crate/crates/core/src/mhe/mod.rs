//! The moving horizon estimation problem: quadratic costs, window
//! construction, single-shooting rollout, feasibility and the
//! observer-based candidate solution.

mod cost;
mod problem;
mod window;

pub use cost::{CostBounds, CostSpec};
pub use problem::{
    check_feasible, eval_cost, rollout, DecisionVector, FeasibilityReport, HorizonProblem, Violation,
    ViolationKind, WindowRollout, FEASIBILITY_TOLERANCE,
};
pub use window::{build_candidate, problem_at, window_bounds, MovingHorizon, ProblemSnapshot};

pub(crate) use problem::feasibility_of;
