use std::time::{Duration, Instant};

use log::info;
use nalgebra::DVector;

use super::config::{Budget, ExperimentConfig};
use crate::analysis::{rmse, Rmse};
use crate::dynamics::{draw_noise, project_onto, simulate, SystemModel, TrajectoryLog};
use crate::error::{Error, Result};
use crate::mhe::{build_candidate, problem_at, rollout, CostSpec, DecisionVector, HorizonProblem};
use crate::observer::{run_observer, ObserverLog, ObserverSpec};
use crate::solver::{solve_converged, solve_suboptimal, IterationReport, SolverConfig};

/// Per-budget outcome of an experiment. Window quantities are indexed by
/// `t - 1` for `t = 1..=T`; `estimates` covers `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRun {
    pub budget: Budget,
    pub estimates: Vec<DVector<f64>>,
    pub solutions: Vec<DecisionVector>,
    /// Suboptimal window costs `J_hat(t)`.
    pub suboptimal_costs: Vec<f64>,
    /// Candidate window costs `J_tilde(t)`.
    pub candidate_costs: Vec<f64>,
    pub reports: Vec<IterationReport>,
    pub rmse: Rmse,
}

impl BudgetRun {
    pub fn errors(&self, truth: &TrajectoryLog) -> Vec<f64> {
        truth.states.iter().zip(&self.estimates).map(|(x, xh)| (x - xh).norm()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub truth: TrajectoryLog,
    pub observer: ObserverLog,
    /// Window start `t - M` for every `t = 1..=T`.
    pub window_starts: Vec<usize>,
    pub runs: Vec<BudgetRun>,
    pub observer_rmse: Rmse,
    /// Wall-clock time per budget; excluded from every written output.
    pub timing: Vec<(Budget, Duration)>,
}

impl RunResult {
    pub fn run(&self, budget: Budget) -> Option<&BudgetRun> {
        self.runs.iter().find(|r| r.budget == budget)
    }

    /// Whether the window costs are ordered by budget at every `t`
    /// (more iterations never cost more).
    pub fn costs_monotone_in_budget(&self) -> bool {
        self.runs.windows(2).all(|pair| {
            pair[0]
                .suboptimal_costs
                .iter()
                .zip(&pair[1].suboptimal_costs)
                .all(|(lo_budget, hi_budget)| hi_budget <= lo_budget)
        })
    }
}

/// Everything budget-independent of an experiment: plant, costs, truth and
/// observer log.
pub struct Prepared {
    pub model: SystemModel,
    pub observer_spec: ObserverSpec,
    pub cost: CostSpec,
    pub truth: TrajectoryLog,
    pub observer: ObserverLog,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let model = cfg.system_model()?;
    let observer_spec = cfg.observer()?;
    let cost = cfg.cost_spec()?;
    let (mut w, mut v) = draw_noise(&cfg.noise, cfg.steps)?;
    // Bounded sets clip the drawn noise; the helper logs every projection.
    if !model.disturbance_set().is_unbounded() {
        project_onto(&mut w, model.disturbance_set(), "disturbance");
    }
    if !model.noise_set().is_unbounded() {
        project_onto(&mut v, model.noise_set(), "measurement noise");
    }
    let truth = simulate(&model, &cfg.x0, &w, &v, cfg.steps)?;
    let observer = run_observer(&observer_spec, &cfg.z0, &truth.outputs)?;
    Ok(Prepared {
        model,
        observer_spec,
        cost,
        truth,
        observer,
    })
}

impl Prepared {
    fn windows(&self, cfg: &ExperimentConfig) -> Result<Vec<(HorizonProblem<'_>, DecisionVector)>> {
        (1..=cfg.steps)
            .map(|t| {
                let wrap = |source: Error| Error::Step {
                    t,
                    budget: "candidate".into(),
                    source: Box::new(source),
                };
                let problem =
                    problem_at(&self.model, &self.cost, &self.observer, &self.truth.outputs, t, cfg.horizon)
                        .map_err(wrap)?;
                let candidate = build_candidate(&self.observer, problem.start(), problem.len()).map_err(wrap)?;
                Ok((problem, candidate))
            })
            .collect()
    }
}

fn run_budget(
    budget: Budget,
    windows: &[(HorizonProblem<'_>, DecisionVector)],
    solver: &SolverConfig,
    prepared: &Prepared,
    z0: &DVector<f64>,
) -> Result<BudgetRun> {
    let mut estimates = vec![z0.clone()];
    let mut solutions = Vec::with_capacity(windows.len());
    let mut suboptimal_costs = Vec::with_capacity(windows.len());
    let mut candidate_costs = Vec::with_capacity(windows.len());
    let mut reports = Vec::with_capacity(windows.len());
    for (problem, candidate) in windows {
        let t = problem.end();
        let step = || -> Result<_> {
            let (solution, report) = match budget {
                Budget::Iterations(k) => solve_suboptimal(problem, candidate, &solver.with_budget(k))?,
                Budget::Converged => solve_converged(problem, candidate, solver)?,
            };
            let roll = rollout(problem, &solution)?;
            let candidate_cost = report.cost_trace[0];
            if roll.cost > candidate_cost {
                return Err(Error::CostIncrease {
                    t,
                    budget: budget.to_string(),
                    suboptimal: roll.cost,
                    candidate: candidate_cost,
                });
            }
            Ok((solution, report, roll, candidate_cost))
        };
        let (solution, report, roll, candidate_cost) = step().map_err(|source| Error::Step {
            t,
            budget: budget.to_string(),
            source: Box::new(source),
        })?;
        estimates.push(roll.end_state().clone());
        suboptimal_costs.push(roll.cost);
        candidate_costs.push(candidate_cost);
        solutions.push(solution);
        reports.push(report);
    }
    let rmse = rmse(&prepared.truth.states, &estimates, 0)?;
    Ok(BudgetRun {
        budget,
        estimates,
        solutions,
        suboptimal_costs,
        candidate_costs,
        reports,
        rmse,
    })
}

/// Simulate the plant once, run the observer on its outputs and solve every
/// window for every configured budget. Budgets share the windows and the
/// observer candidates; `parallel` runs them on separate threads.
pub fn run_experiment(cfg: &ExperimentConfig, parallel: bool) -> Result<RunResult> {
    let prepared = prepare(cfg)?;
    let windows = prepared.windows(cfg)?;
    let budgets = cfg.budget_list();
    let timed = |b: Budget| {
        let start = Instant::now();
        let run = run_budget(b, &windows, &cfg.solver, &prepared, &cfg.z0);
        (run, start.elapsed())
    };
    let outcomes: Vec<(Result<BudgetRun>, Duration)> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = budgets.iter().map(|&b| scope.spawn(move || timed(b))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("budget worker panicked"))
                .collect()
        })
    } else {
        budgets.iter().map(|&b| timed(b)).collect()
    };
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut timing = Vec::with_capacity(outcomes.len());
    for (b, (run, elapsed)) in budgets.iter().zip(outcomes) {
        let run = run?;
        info!("budget {b}: rmse {:.4e} in {:.2?}", run.rmse.aggregate, elapsed);
        timing.push((*b, elapsed));
        runs.push(run);
    }
    let observer_rmse = rmse(&prepared.truth.states, &prepared.observer.states, 0)?;
    Ok(RunResult {
        window_starts: windows.iter().map(|(p, _)| p.start()).collect(),
        truth: prepared.truth,
        observer: prepared.observer,
        runs,
        observer_rmse,
        timing,
    })
}
