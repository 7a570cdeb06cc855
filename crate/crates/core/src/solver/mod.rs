//! Iteration-budgeted solver for the window problem.
//!
//! Every run starts at a feasible candidate, only accepts feasible iterates
//! with sufficient decrease and can therefore be stopped after any number of
//! iterations (including none) without losing the cost-decrease guarantee.

mod derivatives;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::csvio::{format_float, write_rows};
use crate::error::{Error, Result};
use crate::mhe::{feasibility_of, rollout, DecisionVector, HorizonProblem, WindowRollout};

pub use derivatives::cost_gradient;
use derivatives::{gradient_from_rollout, residual_jacobian, weighted_residuals};

/// Iteration cap of [`solve_converged`].
pub const CONVERGED_ITERATION_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    /// Steepest descent `-grad J`.
    Gradient,
    /// Gauss-Newton step on the weighted residuals, falling back to
    /// steepest descent when it yields no acceptable step.
    GaussNewton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the projected-gradient norm is below this.
    pub convergence_tol: f64,
    /// Stop once an accepted step lowers the cost by less than this.
    pub cost_change_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
    pub direction: SearchDirection,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            convergence_tol: 1e-8,
            cost_change_tol: 1e-10,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            initial_step: 1.0,
            direction: SearchDirection::GaussNewton,
        }
    }
}

impl SolverConfig {
    pub fn with_budget(&self, max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("solver config: {what}")));
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence_tol must be positive");
        }
        if self.cost_change_tol.is_nan() || self.cost_change_tol < 0.0 {
            return bad("cost_change_tol must be non-negative");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    BudgetExhausted,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iterations_used: usize,
    /// Cost after each accepted iteration; entry 0 is the candidate cost.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    /// Largest constraint violation of the returned point.
    pub feasibility_residual: f64,
}

impl IterationReport {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the candidate cost")
    }

    /// `iteration,cost` rows.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header = vec!["iteration".to_string(), "cost".to_string()];
        let rows: Vec<Vec<String>> = self
            .cost_trace
            .iter()
            .enumerate()
            .map(|(k, c)| vec![k.to_string(), format_float(*c)])
            .collect();
        write_rows(writer, &header, &rows)
    }
}

struct Iterate {
    decision: DecisionVector,
    roll: WindowRollout,
}

fn project(problem: &HorizonProblem<'_>, d: &DecisionVector) -> DecisionVector {
    let model = problem.model();
    DecisionVector::new(
        model.state_set().project(&d.chi0),
        d.omegas.iter().map(|w| model.disturbance_set().project(w)).collect(),
    )
}

/// Norm of `z - P(z - g)`, zero exactly at stationary points of the
/// box-constrained problem.
fn projected_gradient_norm(problem: &HorizonProblem<'_>, d: &DecisionVector, grad: &DVector<f64>) -> Result<f64> {
    let n = problem.model().n();
    let flat = d.to_flat();
    let shifted = DecisionVector::from_flat(n, &(&flat - grad))?;
    Ok((flat - project(problem, &shifted).to_flat()).norm())
}

fn gauss_newton_direction(problem: &HorizonProblem<'_>, it: &Iterate) -> Option<DVector<f64>> {
    let r = weighted_residuals(problem, &it.decision, &it.roll);
    let jac = residual_jacobian(problem, &it.roll);
    let normal = jac.transpose() * &jac;
    let rhs = -(jac.transpose() * r);
    let step = normal.cholesky()?.solve(&rhs);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Armijo backtracking along the projection arc `P(z + alpha * dir)`.
/// Only feasible trial points are accepted.
fn line_search(
    problem: &HorizonProblem<'_>,
    it: &Iterate,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    cfg: &SolverConfig,
) -> Option<Iterate> {
    let n = problem.model().n();
    let flat = it.decision.to_flat();
    let mut alpha = cfg.initial_step;
    for _ in 0..=cfg.max_backtracks {
        let raw = DecisionVector::from_flat(n, &(&flat + dir * alpha)).ok()?;
        let trial = project(problem, &raw);
        let step = trial.to_flat() - &flat;
        let slope = grad.dot(&step);
        if slope < 0.0 {
            if let Ok(roll) = rollout(problem, &trial) {
                if roll.cost <= it.roll.cost + cfg.armijo_c * slope
                    && feasibility_of(problem, &trial, &roll).is_feasible()
                {
                    return Some(Iterate { decision: trial, roll });
                }
            }
        }
        alpha *= cfg.backtrack_factor;
    }
    None
}

/// Warm-started descent limited to `cfg.max_iterations` iterations.
///
/// The returned point is feasible and its cost never exceeds the
/// candidate's. An iteration is one search direction together with its
/// complete backtracking search. With a budget of zero the candidate is
/// returned unchanged.
pub fn solve_suboptimal(
    problem: &HorizonProblem<'_>,
    candidate: &DecisionVector,
    cfg: &SolverConfig,
) -> Result<(DecisionVector, IterationReport)> {
    cfg.validate()?;
    let roll = rollout(problem, candidate)?;
    let feasibility = feasibility_of(problem, candidate, &roll);
    if !feasibility.is_feasible() {
        let first = &feasibility.violations[0];
        return Err(Error::InfeasibleCandidate(format!(
            "{} violation {:e} at window index {} (t={})",
            match first.kind {
                crate::mhe::ViolationKind::State => "state",
                crate::mhe::ViolationKind::Disturbance => "disturbance",
                crate::mhe::ViolationKind::Residual => "residual",
            },
            first.amount,
            first.index,
            problem.start() + first.index
        )));
    }

    let mut it = Iterate {
        decision: candidate.clone(),
        roll,
    };
    let mut trace = vec![it.roll.cost];
    let mut used = 0;
    let mut termination = Termination::BudgetExhausted;

    loop {
        let grad = gradient_from_rollout(problem, &it.decision, &it.roll);
        if projected_gradient_norm(problem, &it.decision, &grad)? < cfg.convergence_tol {
            termination = Termination::Converged;
            break;
        }
        if used >= cfg.max_iterations {
            break;
        }
        let steepest = -&grad;
        let next = match cfg.direction {
            SearchDirection::Gradient => line_search(problem, &it, &grad, &steepest, cfg),
            SearchDirection::GaussNewton => gauss_newton_direction(problem, &it)
                .and_then(|dir| line_search(problem, &it, &grad, &dir, cfg))
                .or_else(|| line_search(problem, &it, &grad, &steepest, cfg)),
        };
        let Some(next) = next else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let decrease = it.roll.cost - next.roll.cost;
        it = next;
        used += 1;
        trace.push(it.roll.cost);
        if decrease < cfg.cost_change_tol {
            termination = Termination::Converged;
            break;
        }
    }

    let report = IterationReport {
        iterations_used: used,
        cost_trace: trace,
        converged: termination == Termination::Converged,
        termination,
        feasibility_residual: feasibility_of(problem, &it.decision, &it.roll).max_violation(),
    };
    Ok((it.decision, report))
}

/// Runs until convergence or [`CONVERGED_ITERATION_CAP`] iterations.
pub fn solve_converged(
    problem: &HorizonProblem<'_>,
    candidate: &DecisionVector,
    cfg: &SolverConfig,
) -> Result<(DecisionVector, IterationReport)> {
    solve_suboptimal(problem, candidate, &cfg.with_budget(CONVERGED_ITERATION_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BoxSet, Dynamics, SystemModel};
    use crate::mhe::{check_feasible, eval_cost, CostSpec};
    use nalgebra::dvector;
    use std::sync::Arc;

    fn outputs(ys: &[f64]) -> Vec<DVector<f64>> {
        ys.iter().map(|v| dvector![*v]).collect()
    }

    #[test]
    fn zero_budget_returns_candidate() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let ys = outputs(&[7.0, 6.9, 6.8]);
        let problem = HorizonProblem::new(&model, &cost, dvector![3.0, 0.0], ys, 0).unwrap();
        let cand = DecisionVector::new(dvector![3.0, 0.0], vec![dvector![0.2, 0.2]; 3]);
        let (d, rep) = solve_suboptimal(&problem, &cand, &SolverConfig::default().with_budget(0)).unwrap();
        assert_eq!(d, cand);
        assert_eq!(rep.cost_trace, vec![eval_cost(&problem, &cand).unwrap()]);
        assert_eq!(rep.iterations_used, 0);
    }

    #[test]
    fn global_minimum_converges_immediately() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let mut x = dvector![5.0, 2.0];
        let mut ys = Vec::new();
        for _ in 0..5 {
            ys.push(model.h(&x));
            x = model.f(&x).unwrap();
        }
        let problem = HorizonProblem::new(&model, &cost, dvector![5.0, 2.0], ys, 0).unwrap();
        let cand = DecisionVector::new(dvector![5.0, 2.0], vec![dvector![0.0, 0.0]; 5]);
        let (_, rep) = solve_suboptimal(&problem, &cand, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 0);
    }

    #[test]
    fn rejects_infeasible_candidate() {
        let dynamics: Arc<dyn Dynamics> = Arc::new(crate::dynamics::BatchReactor::default());
        let model = SystemModel::with_sets(
            dynamics,
            BoxSet::unbounded(2),
            BoxSet::origin(2),
            BoxSet::unbounded(1),
            2f64.sqrt(),
        )
        .unwrap();
        let cost = CostSpec::batch_reactor();
        let problem = HorizonProblem::new(&model, &cost, dvector![3.0, 0.0], vec![dvector![7.0]], 0).unwrap();
        let cand = DecisionVector::new(dvector![3.0, 0.0], vec![dvector![0.2, 0.2]]);
        let rep = check_feasible(&problem, &cand).unwrap();
        assert!(!rep.is_feasible());
        assert_eq!(rep.violations[0].index, 0);
        assert!(matches!(
            solve_suboptimal(&problem, &cand, &SolverConfig::default()),
            Err(Error::InfeasibleCandidate(_))
        ));
    }

    #[test]
    fn budgets_are_monotone_on_reactor_window() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let ys = outputs(&[7.1, 6.9, 7.0, 6.7, 6.9, 6.8, 6.6, 6.9, 6.5, 6.7]);
        let problem = HorizonProblem::new(&model, &cost, dvector![3.0, 0.0], ys, 0).unwrap();
        let cand = DecisionVector::new(dvector![3.0, 0.0], vec![dvector![0.2, 0.2]; 10]);
        let j0 = eval_cost(&problem, &cand).unwrap();
        let cfg = SolverConfig::default();
        for direction in [SearchDirection::GaussNewton, SearchDirection::Gradient] {
            let cfg = SolverConfig { direction, ..cfg.clone() };
            let (_, r2) = solve_suboptimal(&problem, &cand, &cfg.with_budget(2)).unwrap();
            let (_, r5) = solve_suboptimal(&problem, &cand, &cfg.with_budget(5)).unwrap();
            let (_, rc) = solve_converged(&problem, &cand, &cfg).unwrap();
            assert!(r5.final_cost() <= r2.final_cost());
            assert!(r2.final_cost() < j0);
            assert!(rc.final_cost() <= r5.final_cost());
            for w in rc.cost_trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert_eq!(&rc.cost_trace[..r5.cost_trace.len()], &r5.cost_trace[..]);
        }
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            armijo_c: 1.5,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            backtrack_factor: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_json_and_trace() {
        let rep = IterationReport {
            iterations_used: 1,
            cost_trace: vec![2.0, 1.0],
            converged: false,
            termination: Termination::BudgetExhausted,
            feasibility_residual: 0.0,
        };
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"termination\":\"budget_exhausted\""));
        let mut buf = Vec::new();
        rep.write_trace_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,cost\n0,"));
    }
}
