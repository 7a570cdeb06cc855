use std::fmt;
use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};

use super::integrate::{rk4_step, rk4_step_jacobian, Drift};
use super::sets::BoxSet;
use crate::error::{check_dim, check_finite, Error, Result};

/// Discrete-time model `x+ = f(x)`, `y = h(x)` with Jacobians.
///
/// Disturbances and noise enter additively and are handled by the callers.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn transition_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn output(&self, x: &DVector<f64>) -> DVector<f64>;
    fn output_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

pub const REACTOR_K1: f64 = 0.16;
pub const REACTOR_K2: f64 = 0.64;
pub const REACTOR_DT: f64 = 0.1;

/// Drift of the batch reaction `2A <-> B` with rate constants `k1 = 0.16`, `k2 = 0.64`.
pub fn batch_reactor_drift(x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("batch reactor state", 2, x.len())?;
    Ok(BatchReactor::default().eval(x))
}

/// Constant-volume batch reactor, discretized with one RK4 step per sample.
/// The measured output is the total concentration `x1 + x2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchReactor {
    pub k1: f64,
    pub k2: f64,
    pub dt: f64,
}

impl Default for BatchReactor {
    fn default() -> Self {
        Self {
            k1: REACTOR_K1,
            k2: REACTOR_K2,
            dt: REACTOR_DT,
        }
    }
}

impl BatchReactor {
    pub fn new(k1: f64, k2: f64, dt: f64) -> Result<Self> {
        if !(k1 >= 0.0 && k2 >= 0.0 && dt > 0.0 && k1.is_finite() && k2.is_finite() && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "batch reactor needs k1, k2 >= 0 and dt > 0 (got {k1}, {k2}, {dt})"
            )));
        }
        Ok(Self { k1, k2, dt })
    }
}

impl Drift for BatchReactor {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let rate = self.k1 * x[0] * x[0] - self.k2 * x[1];
        dvector![-2.0 * rate, rate]
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let a = 2.0 * self.k1 * x[0];
        DMatrix::from_row_slice(2, 2, &[-2.0 * a, 2.0 * self.k2, a, -self.k2])
    }
}

impl Dynamics for BatchReactor {
    fn state_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("batch reactor state", 2, x.len())?;
        rk4_step(|v| self.eval(v), x, self.dt)
    }

    fn transition_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        rk4_step_jacobian(self, x, self.dt)
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        dvector![x[0] + x[1]]
    }

    fn output_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0])
    }
}

/// Linear time-invariant model `x+ = A x`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_dim("linear model A (square)", a.nrows(), a.ncols())?;
        check_dim("linear model C columns", a.nrows(), c.ncols())?;
        check_finite("linear model A", a.as_slice())?;
        check_finite("linear model C", c.as_slice())?;
        Ok(Self { a, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl Dynamics for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn transition(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("linear model state", self.a.nrows(), x.len())?;
        let next = &self.a * x;
        check_finite("linear transition", next.as_slice())?;
        Ok(next)
    }

    fn transition_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    fn output_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.c.clone()
    }
}

/// A disturbed system `x+ = f(x) + w`, `y = h(x) + v` together with its
/// constraint sets and the Lipschitz constant of `h`.
#[derive(Clone)]
pub struct SystemModel {
    dynamics: Arc<dyn Dynamics>,
    state_set: BoxSet,
    disturbance_set: BoxSet,
    noise_set: BoxSet,
    lipschitz_h: f64,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("n", &self.n())
            .field("p", &self.p())
            .field("state_set", &self.state_set)
            .field("disturbance_set", &self.disturbance_set)
            .field("noise_set", &self.noise_set)
            .field("lipschitz_h", &self.lipschitz_h)
            .finish()
    }
}

impl SystemModel {
    /// Model with unbounded constraint sets.
    pub fn new(dynamics: Arc<dyn Dynamics>, lipschitz_h: f64) -> Result<Self> {
        let n = dynamics.state_dim();
        let p = dynamics.output_dim();
        Self::with_sets(
            dynamics,
            BoxSet::unbounded(n),
            BoxSet::unbounded(n),
            BoxSet::unbounded(p),
            lipschitz_h,
        )
    }

    pub fn with_sets(
        dynamics: Arc<dyn Dynamics>,
        state_set: BoxSet,
        disturbance_set: BoxSet,
        noise_set: BoxSet,
        lipschitz_h: f64,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let p = dynamics.output_dim();
        check_dim("state set", n, state_set.dim())?;
        check_dim("disturbance set", n, disturbance_set.dim())?;
        check_dim("noise set", p, noise_set.dim())?;
        if lipschitz_h <= 0.0 || !lipschitz_h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "output Lipschitz constant must be positive, got {lipschitz_h}"
            )));
        }
        Ok(Self {
            dynamics,
            state_set,
            disturbance_set,
            noise_set,
            lipschitz_h,
        })
    }

    /// The reactor with default rate constants and unbounded sets; `L_h = sqrt(2)`.
    pub fn batch_reactor() -> Self {
        Self::new(Arc::new(BatchReactor::default()), std::f64::consts::SQRT_2)
            .expect("reactor parameters are valid")
    }

    pub fn n(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn p(&self) -> usize {
        self.dynamics.output_dim()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn state_set(&self) -> &BoxSet {
        &self.state_set
    }

    pub fn disturbance_set(&self) -> &BoxSet {
        &self.disturbance_set
    }

    pub fn noise_set(&self) -> &BoxSet {
        &self.noise_set
    }

    pub fn lipschitz_h(&self) -> f64 {
        self.lipschitz_h
    }

    pub fn f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", self.n(), x.len())?;
        self.dynamics.transition(x)
    }

    pub fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dynamics.output(x)
    }
}
