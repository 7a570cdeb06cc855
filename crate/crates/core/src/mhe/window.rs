use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cost::CostSpec;
use super::problem::{eval_cost, DecisionVector, HorizonProblem};
use crate::dynamics::SystemModel;
use crate::error::{check_dim, Error, Result};
use crate::observer::{ObserverLog, ObserverSpec};

/// `(start, M)` of the window used at time `t` with horizon `N`: until the
/// horizon is full the window covers all of `0..t`.
pub fn window_bounds(t: usize, horizon: usize) -> (usize, usize) {
    let len = horizon.min(t);
    (t - len, len)
}

/// Observer-based candidate: `chi0 = z(start)`, `omega(i) = L(i)` for
/// `i = start..start+M-1`.
pub fn build_candidate(log: &ObserverLog, start: usize, len: usize) -> Result<DecisionVector> {
    let end = start + len;
    if log.corrections.len() < end {
        return Err(Error::LogTooShort {
            needed: end,
            available: log.corrections.len(),
        });
    }
    Ok(DecisionVector::new(
        log.states[start].clone(),
        log.corrections[start..end].to_vec(),
    ))
}

/// Window at time `t >= 1` with prior `z(t - M)` and measurements
/// `y(t - M)..y(t - 1)`.
pub fn problem_at<'a>(
    model: &'a SystemModel,
    cost: &'a CostSpec,
    log: &ObserverLog,
    outputs: &[DVector<f64>],
    t: usize,
    horizon: usize,
) -> Result<HorizonProblem<'a>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon length must be at least 1".into()));
    }
    if t == 0 {
        return Err(Error::InvalidParameter("no window exists at t = 0".into()));
    }
    if outputs.len() < t {
        return Err(Error::InvalidParameter(format!(
            "window at t={t} needs {t} measurements, have {}",
            outputs.len()
        )));
    }
    let (start, len) = window_bounds(t, horizon);
    if log.states.len() <= start {
        return Err(Error::LogTooShort {
            needed: start,
            available: log.states.len(),
        });
    }
    HorizonProblem::new(
        model,
        cost,
        log.states[start].clone(),
        outputs[start..start + len].to_vec(),
        start,
    )
}

/// Running estimator state: the measurement record and the observer log it
/// has produced so far.
#[derive(Debug, Clone)]
pub struct MovingHorizon<'a> {
    observer: &'a ObserverSpec,
    cost: &'a CostSpec,
    horizon: usize,
    outputs: Vec<DVector<f64>>,
    log: ObserverLog,
}

impl<'a> MovingHorizon<'a> {
    pub fn new(observer: &'a ObserverSpec, cost: &'a CostSpec, horizon: usize, z0: DVector<f64>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon length must be at least 1".into()));
        }
        check_dim("observer initial state", observer.model.n(), z0.len())?;
        Ok(Self {
            observer,
            cost,
            horizon,
            outputs: Vec::new(),
            log: ObserverLog::new(z0),
        })
    }

    /// Current time `t` (number of measurements consumed).
    pub fn time(&self) -> usize {
        self.outputs.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn observer_log(&self) -> &ObserverLog {
        &self.log
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    /// Consume `y(t)` and return the window for `t + 1` with its candidate.
    pub fn advance(&mut self, y: DVector<f64>) -> Result<(HorizonProblem<'a>, DecisionVector)> {
        self.log.push(self.observer, &y)?;
        self.outputs.push(y);
        let t = self.time();
        let problem = problem_at(&self.observer.model, self.cost, &self.log, &self.outputs, t, self.horizon)?;
        let candidate = build_candidate(&self.log, problem.start(), problem.len())?;
        Ok((problem, candidate))
    }
}

/// JSON-serializable record of one window and its candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSnapshot {
    pub start: usize,
    pub horizon_len: usize,
    #[serde(with = "crate::serde_util::vector")]
    pub prior: DVector<f64>,
    #[serde(with = "crate::serde_util::vectors")]
    pub measurements: Vec<DVector<f64>>,
    pub candidate: DecisionVector,
    pub candidate_cost: f64,
}

impl ProblemSnapshot {
    pub fn capture(problem: &HorizonProblem<'_>, candidate: &DecisionVector) -> Result<Self> {
        Ok(Self {
            start: problem.start(),
            horizon_len: problem.len(),
            prior: problem.prior().clone(),
            measurements: problem.measurements().to_vec(),
            candidate: candidate.clone(),
            candidate_cost: eval_cost(problem, candidate)?,
        })
    }

    /// Rebuild the window against a model and cost.
    pub fn to_problem<'a>(&self, model: &'a SystemModel, cost: &'a CostSpec) -> Result<HorizonProblem<'a>> {
        HorizonProblem::new(model, cost, self.prior.clone(), self.measurements.clone(), self.start)
    }
}
