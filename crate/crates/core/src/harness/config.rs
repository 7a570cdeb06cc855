use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BatchReactor, BoxSet, Dynamics, NoiseSpec, SystemModel, REACTOR_DT, REACTOR_K1, REACTOR_K2};
use crate::error::{Error, Result};
use crate::mhe::CostSpec;
use crate::observer::ObserverSpec;
use crate::solver::SolverConfig;

/// Plant model selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BatchReactor { k1: f64, k2: f64, dt: f64 },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::BatchReactor {
            k1: REACTOR_K1,
            k2: REACTOR_K2,
            dt: REACTOR_DT,
        }
    }
}

impl ModelConfig {
    pub fn dt(&self) -> f64 {
        match self {
            ModelConfig::BatchReactor { dt, .. } => *dt,
        }
    }
}

/// Optional box constraints; omitted sets are unbounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub state: Option<BoxSet>,
    pub disturbance: Option<BoxSet>,
    pub noise: Option<BoxSet>,
}

/// One budget of a run: a fixed iteration count or the converged baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Budget {
    Iterations(usize),
    Converged,
}

impl Budget {
    /// `budget_<k>` or `converged`; used for file names and labels.
    pub fn label(&self) -> String {
        match self {
            Budget::Iterations(k) => format!("budget_{k}"),
            Budget::Converged => "converged".into(),
        }
    }
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::Iterations(k) => write!(f, "{k}"),
            Budget::Converged => f.write_str("converged"),
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("converged") || s.eq_ignore_ascii_case("conv") {
            return Ok(Budget::Converged);
        }
        s.parse()
            .map(Budget::Iterations)
            .map_err(|_| Error::Config(format!("invalid budget '{s}' (expected an integer or 'converged')")))
    }
}

/// Full description of one reactor-style experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Simulation length `T`.
    pub steps: usize,
    /// Horizon length `N`.
    pub horizon: usize,
    pub budgets: Vec<usize>,
    /// Also run the solver to convergence on every window.
    pub include_converged: bool,
    pub solver: SolverConfig,
    pub noise: NoiseSpec,
    #[serde(with = "crate::serde_util::vector")]
    pub x0: DVector<f64>,
    #[serde(with = "crate::serde_util::vector")]
    pub z0: DVector<f64>,
    /// Continuous-time injection gain `G` (`n x p`); the observer applies
    /// `dt * G * (y - h(z))`.
    #[serde(with = "crate::serde_util::matrix_rows")]
    pub observer_gain: DMatrix<f64>,
    /// Cost weights; when absent, identity prior weight with `Q^-1`, `R^-1`.
    pub cost: Option<CostSpec>,
    pub constraints: ConstraintConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            steps: 100,
            horizon: 10,
            budgets: vec![0, 2, 5],
            include_converged: true,
            solver: SolverConfig::default(),
            noise: NoiseSpec::batch_reactor(42),
            x0: DVector::from_vec(vec![5.0, 2.0]),
            z0: DVector::from_vec(vec![3.0, 0.0]),
            observer_gain: DMatrix::from_element(2, 1, 0.5),
            cost: None,
            constraints: ConstraintConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Budgets in run order: the configured counts ascending, then the
    /// converged baseline.
    pub fn budget_list(&self) -> Vec<Budget> {
        let mut list: Vec<Budget> = self.budgets.iter().map(|&k| Budget::Iterations(k)).collect();
        if self.include_converged {
            list.push(Budget::Converged);
        }
        list.sort();
        list.dedup();
        list
    }

    /// Replace the budget selection.
    pub fn set_budgets(&mut self, budgets: &[Budget]) {
        self.budgets = budgets
            .iter()
            .filter_map(|b| match b {
                Budget::Iterations(k) => Some(*k),
                Budget::Converged => None,
            })
            .collect();
        self.include_converged = budgets.contains(&Budget::Converged);
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.steps == 0 {
            return fail("steps must be at least 1".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.budgets.is_empty() && !self.include_converged {
            return fail("no budgets selected".into());
        }
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        let model = self.system_model()?;
        let (n, p) = (model.n(), model.p());
        if self.x0.len() != n || self.z0.len() != n {
            return fail(format!("x0 and z0 need {n} entries"));
        }
        if self.observer_gain.shape() != (n, p) {
            return fail(format!("observer_gain must be {n}x{p}"));
        }
        if self.noise.covariance_w.shape() != (n, n) || self.noise.covariance_v.shape() != (p, p) {
            return fail(format!("noise covariances must be {n}x{n} and {p}x{p}"));
        }
        let cost = self.cost_spec()?;
        if cost.n() != n || cost.p() != p {
            return fail(format!("cost weights must be {n}x{n} and {p}x{p}"));
        }
        Ok(())
    }

    pub fn system_model(&self) -> Result<SystemModel> {
        let dynamics: Arc<dyn Dynamics> = match &self.model {
            ModelConfig::BatchReactor { k1, k2, dt } => {
                Arc::new(BatchReactor::new(*k1, *k2, *dt).map_err(|e| Error::Config(e.to_string()))?)
            }
        };
        let (n, p) = (dynamics.state_dim(), dynamics.output_dim());
        let c = &self.constraints;
        SystemModel::with_sets(
            dynamics,
            c.state.clone().unwrap_or_else(|| BoxSet::unbounded(n)),
            c.disturbance.clone().unwrap_or_else(|| BoxSet::unbounded(n)),
            c.noise.clone().unwrap_or_else(|| BoxSet::unbounded(p)),
            std::f64::consts::SQRT_2,
        )
        .map_err(|e| Error::Config(format!("constraints: {e}")))
    }

    pub fn observer(&self) -> Result<ObserverSpec> {
        ObserverSpec::with_linear_gain(self.system_model()?, self.observer_gain.clone(), self.model.dt())
            .map_err(|e| Error::Config(format!("observer: {e}")))
    }

    pub fn cost_spec(&self) -> Result<CostSpec> {
        match &self.cost {
            Some(c) => Ok(c.clone()),
            None => CostSpec::from_covariances(&self.noise.covariance_w, &self.noise.covariance_v)
                .map_err(|e| Error::Config(format!("cost from noise covariances: {e}"))),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.noise.seed = seed;
        cfg
    }
}
