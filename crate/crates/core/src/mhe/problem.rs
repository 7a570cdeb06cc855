use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cost::CostSpec;
use crate::dynamics::SystemModel;
use crate::error::{check_dim, Error, Result};

/// Set-membership tolerance of the window constraints.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// One estimation window: prior, the `M` measurements `y(start)..y(start+M-1)`
/// and the model/cost they are evaluated against.
#[derive(Debug, Clone)]
pub struct HorizonProblem<'a> {
    model: &'a SystemModel,
    cost: &'a CostSpec,
    prior: DVector<f64>,
    measurements: Vec<DVector<f64>>,
    start: usize,
}

impl<'a> HorizonProblem<'a> {
    pub fn new(
        model: &'a SystemModel,
        cost: &'a CostSpec,
        prior: DVector<f64>,
        measurements: Vec<DVector<f64>>,
        start: usize,
    ) -> Result<Self> {
        check_dim("cost state dimension", model.n(), cost.n())?;
        check_dim("cost output dimension", model.p(), cost.p())?;
        check_dim("prior", model.n(), prior.len())?;
        if measurements.is_empty() {
            return Err(Error::InvalidParameter("estimation window needs at least one measurement".into()));
        }
        for y in &measurements {
            check_dim("window measurement", model.p(), y.len())?;
        }
        Ok(Self {
            model,
            cost,
            prior,
            measurements,
            start,
        })
    }

    pub fn model(&self) -> &'a SystemModel {
        self.model
    }

    pub fn cost(&self) -> &'a CostSpec {
        self.cost
    }

    pub fn prior(&self) -> &DVector<f64> {
        &self.prior
    }

    pub fn measurements(&self) -> &[DVector<f64>] {
        &self.measurements
    }

    /// Absolute time of the first window state.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Window length `M`.
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Absolute time at which the window's estimate applies.
    pub fn end(&self) -> usize {
        self.start + self.len()
    }

    pub fn decision_dim(&self) -> usize {
        self.model.n() * (self.len() + 1)
    }
}

/// Optimization variables: initial window state and one disturbance per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    #[serde(with = "crate::serde_util::vector")]
    pub chi0: DVector<f64>,
    #[serde(with = "crate::serde_util::vectors")]
    pub omegas: Vec<DVector<f64>>,
}

impl DecisionVector {
    pub fn new(chi0: DVector<f64>, omegas: Vec<DVector<f64>>) -> Self {
        Self { chi0, omegas }
    }

    /// Stacked `(chi0, omega_0, ..., omega_{M-1})`.
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.chi0.len();
        let mut flat = DVector::zeros(n * (self.omegas.len() + 1));
        flat.rows_mut(0, n).copy_from(&self.chi0);
        for (i, w) in self.omegas.iter().enumerate() {
            flat.rows_mut(n * (i + 1), n).copy_from(w);
        }
        flat
    }

    pub fn from_flat(n: usize, flat: &DVector<f64>) -> Result<Self> {
        if n == 0 || !flat.len().is_multiple_of(n) || flat.len() < n {
            return Err(Error::Dimension {
                context: "flat decision vector",
                expected: n,
                actual: flat.len(),
            });
        }
        let chi0 = flat.rows(0, n).into_owned();
        let omegas = (1..flat.len() / n).map(|i| flat.rows(n * i, n).into_owned()).collect();
        Ok(Self { chi0, omegas })
    }

    fn check(&self, problem: &HorizonProblem<'_>) -> Result<()> {
        let n = problem.model.n();
        check_dim("decision chi0", n, self.chi0.len())?;
        check_dim("decision disturbance count", problem.len(), self.omegas.len())?;
        for w in &self.omegas {
            check_dim("decision disturbance", n, w.len())?;
        }
        Ok(())
    }
}

/// Forward pass of a decision vector through a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRollout {
    /// `M + 1` window states.
    pub states: Vec<DVector<f64>>,
    /// `M` residuals `nu(i) = y(i) - h(chi(i))`.
    pub residuals: Vec<DVector<f64>>,
    pub cost: f64,
}

impl WindowRollout {
    /// The state estimate at the window end.
    pub fn end_state(&self) -> &DVector<f64> {
        self.states.last().expect("rollout has at least one state")
    }
}

pub fn rollout(problem: &HorizonProblem<'_>, d: &DecisionVector) -> Result<WindowRollout> {
    d.check(problem)?;
    let model = problem.model;
    let cost = problem.cost;
    let mut states = Vec::with_capacity(problem.len() + 1);
    let mut residuals = Vec::with_capacity(problem.len());
    let mut total = cost.prior_cost(&d.chi0, &problem.prior);
    states.push(d.chi0.clone());
    for (i, (y, omega)) in problem.measurements.iter().zip(&d.omegas).enumerate() {
        let chi = &states[i];
        let nu = y - model.h(chi);
        total += cost.stage_cost(omega, &nu);
        let next = model.f(chi)? + omega;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("window state {}", i + 1)));
        }
        residuals.push(nu);
        states.push(next);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("window cost".into()));
    }
    Ok(WindowRollout {
        states,
        residuals,
        cost: total,
    })
}

pub fn eval_cost(problem: &HorizonProblem<'_>, d: &DecisionVector) -> Result<f64> {
    Ok(rollout(problem, d)?.cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    State,
    Disturbance,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Window-relative index `i`; the absolute time is `start + i`.
    pub index: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.amount).fold(0.0, f64::max)
    }
}

/// Check `chi(i) in X`, `omega(i) in W`, `nu(i) in V` over the window.
pub fn check_feasible(problem: &HorizonProblem<'_>, d: &DecisionVector) -> Result<FeasibilityReport> {
    let roll = rollout(problem, d)?;
    Ok(feasibility_of(problem, d, &roll))
}

pub(crate) fn feasibility_of(
    problem: &HorizonProblem<'_>,
    d: &DecisionVector,
    roll: &WindowRollout,
) -> FeasibilityReport {
    let model = problem.model;
    let mut violations = Vec::new();
    let mut record = |kind, index, amount: f64| {
        if amount > FEASIBILITY_TOLERANCE {
            violations.push(Violation { kind, index, amount });
        }
    };
    // The final state chi(start + M) is the estimate itself, not a window
    // constraint.
    for (i, x) in roll.states[..problem.len()].iter().enumerate() {
        record(ViolationKind::State, i, model.state_set().violation(x));
    }
    for (i, w) in d.omegas.iter().enumerate() {
        record(ViolationKind::Disturbance, i, model.disturbance_set().violation(w));
    }
    for (i, nu) in roll.residuals.iter().enumerate() {
        record(ViolationKind::Residual, i, model.noise_set().violation(nu));
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn single_stage_residual() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let problem = HorizonProblem::new(&model, &cost, dvector![3.0, 0.0], vec![dvector![7.0]], 0).unwrap();
        let d = DecisionVector::new(dvector![3.0, 0.0], vec![dvector![0.0, 0.0]]);
        let roll = rollout(&problem, &d).unwrap();
        assert_eq!(roll.residuals, vec![dvector![4.0]]);
        assert_eq!(roll.states[1], model.f(&dvector![3.0, 0.0]).unwrap());
        assert!((roll.cost - 16.0 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn forced_stage_cost_is_two() {
        // chi0 = prior, omega = (0.1, 0), data forcing nu = 0.2.
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let chi0 = dvector![2.0, 1.0];
        let y = model.h(&chi0) + dvector![0.2];
        let problem = HorizonProblem::new(&model, &cost, chi0.clone(), vec![y], 4).unwrap();
        let d = DecisionVector::new(chi0, vec![dvector![0.1, 0.0]]);
        assert!((eval_cost(&problem, &d).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_data_has_zero_cost() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let mut x = dvector![5.0, 2.0];
        let mut ys = Vec::new();
        for _ in 0..6 {
            ys.push(model.h(&x));
            x = model.f(&x).unwrap();
        }
        let problem = HorizonProblem::new(&model, &cost, dvector![5.0, 2.0], ys, 0).unwrap();
        let d = DecisionVector::new(dvector![5.0, 2.0], vec![dvector![0.0, 0.0]; 6]);
        let roll = rollout(&problem, &d).unwrap();
        assert_eq!(roll.cost, 0.0);
        assert!(roll.residuals.iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        assert!(HorizonProblem::new(&model, &cost, dvector![1.0], vec![dvector![1.0]], 0).is_err());
        assert!(HorizonProblem::new(&model, &cost, dvector![1.0, 1.0], vec![], 0).is_err());
        let problem = HorizonProblem::new(&model, &cost, dvector![1.0, 1.0], vec![dvector![1.0]], 0).unwrap();
        let d = DecisionVector::new(dvector![1.0, 1.0], vec![]);
        assert!(rollout(&problem, &d).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let d = DecisionVector::new(dvector![1.0, 2.0], vec![dvector![3.0, 4.0], dvector![5.0, 6.0]]);
        let flat = d.to_flat();
        assert_eq!(flat, dvector![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(DecisionVector::from_flat(2, &flat).unwrap(), d);
        assert!(DecisionVector::from_flat(4, &flat).is_err());
    }
}
