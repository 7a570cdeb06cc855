//! Full-order output-injection observer `z+ = f(z) + L(z, y - h(z))`.
//!
//! Its corrections `L` double as disturbance estimates for the candidate
//! solution of every estimation window.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::csvio::{indexed, push_vector, write_rows};
use crate::dynamics::{SystemModel, REACTOR_DT, SET_TOLERANCE};
use crate::error::{check_dim, check_finite, Error, Result};

/// Output-injection map `(z, v_z) -> L` with `L(z, 0) = 0`.
pub trait Correction: Send + Sync {
    fn apply(&self, z: &DVector<f64>, fitting_error: &DVector<f64>) -> DVector<f64>;
}

/// Constant-gain injection `L = dt * G * v_z`: the continuous-time term
/// `G (y - h(z))` discretized with explicit Euler.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGain {
    gain: DMatrix<f64>,
    dt: f64,
}

impl LinearGain {
    pub fn new(gain: DMatrix<f64>, dt: f64) -> Result<Self> {
        check_finite("observer gain", gain.as_slice())?;
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("observer step must be positive, got {dt}")));
        }
        Ok(Self { gain, dt })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `dt * ||G||_2`, the tightest linear bound on `|L|`.
    pub fn kappa(&self) -> f64 {
        let sigma = if self.gain.ncols() == 1 || self.gain.nrows() == 1 {
            self.gain.norm()
        } else {
            self.gain.clone().singular_values().max()
        };
        self.dt * sigma
    }
}

impl Correction for LinearGain {
    fn apply(&self, _z: &DVector<f64>, fitting_error: &DVector<f64>) -> DVector<f64> {
        &self.gain * fitting_error * self.dt
    }
}

/// Observer definition: model, correction map and its linear gain bound `kappa`.
#[derive(Clone)]
pub struct ObserverSpec {
    pub model: SystemModel,
    pub correction: Arc<dyn Correction>,
    pub kappa: f64,
}

impl fmt::Debug for ObserverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObserverSpec")
            .field("model", &self.model)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl ObserverSpec {
    pub fn new(model: SystemModel, correction: Arc<dyn Correction>, kappa: f64) -> Result<Self> {
        if kappa <= 0.0 || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self {
            model,
            correction,
            kappa,
        })
    }

    /// Observer with a constant gain; `kappa` is computed from the gain.
    pub fn with_linear_gain(model: SystemModel, gain: DMatrix<f64>, dt: f64) -> Result<Self> {
        check_dim("observer gain rows", model.n(), gain.nrows())?;
        check_dim("observer gain columns", model.p(), gain.ncols())?;
        let correction = LinearGain::new(gain, dt)?;
        let kappa = correction.kappa();
        Self::new(model, Arc::new(correction), kappa)
    }

    /// Luenberger-like reactor observer with `L1 = L2 = 0.5`.
    pub fn batch_reactor(model: SystemModel) -> Result<Self> {
        Self::with_linear_gain(model, DMatrix::from_element(2, 1, 0.5), REACTOR_DT)
    }
}

/// The reactor observer on the default reactor model.
pub fn batch_reactor_observer() -> ObserverSpec {
    ObserverSpec::batch_reactor(SystemModel::batch_reactor()).expect("reactor observer is valid")
}

/// Result of one observer update.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverUpdate {
    pub next: DVector<f64>,
    pub fitting_error: DVector<f64>,
    pub correction: DVector<f64>,
    /// Whether `next` had to be projected onto the state set. The
    /// projection is folded into `correction` so that `next = f(z) + correction`.
    pub projected: bool,
}

pub fn observer_step(spec: &ObserverSpec, z: &DVector<f64>, y: &DVector<f64>) -> Result<ObserverUpdate> {
    let model = &spec.model;
    check_dim("observer state", model.n(), z.len())?;
    check_dim("measurement", model.p(), y.len())?;
    let fitting_error = y - model.h(z);
    let predicted = model.f(z)?;
    let mut correction = spec.correction.apply(z, &fitting_error);
    check_dim("observer correction", model.n(), correction.len())?;
    let mut next = &predicted + &correction;
    check_finite("observer state", next.as_slice())?;
    let mut projected = false;
    if !model.state_set().contains(&next, SET_TOLERANCE) {
        warn!("observer state left the state set; projecting");
        next = model.state_set().project(&next);
        correction = &next - &predicted;
        projected = true;
    }
    Ok(ObserverUpdate {
        next,
        fitting_error,
        correction,
        projected,
    })
}

/// Observer trajectory with the fitting errors and corrections that produced it.
///
/// `states` has one more entry than the other two sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverLog {
    pub states: Vec<DVector<f64>>,
    pub fitting_errors: Vec<DVector<f64>>,
    pub corrections: Vec<DVector<f64>>,
    pub projected: Vec<usize>,
}

impl ObserverLog {
    pub fn new(z0: DVector<f64>) -> Self {
        Self {
            states: vec![z0],
            fitting_errors: Vec::new(),
            corrections: Vec::new(),
            projected: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.fitting_errors.len()
    }

    /// Consume one measurement.
    pub fn push(&mut self, spec: &ObserverSpec, y: &DVector<f64>) -> Result<()> {
        let k = self.steps();
        let update = observer_step(spec, &self.states[k], y)?;
        if update.projected {
            self.projected.push(k + 1);
        }
        self.states.push(update.next);
        self.fitting_errors.push(update.fitting_error);
        self.corrections.push(update.correction);
        Ok(())
    }

    /// Writes `t,z1..zn,vz1..vzp,L1..Ln`; the final row has only states.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.states[0].len();
        let p = self.fitting_errors.first().map_or(0, |v| v.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(indexed("z", n))
            .chain(indexed("vz", p))
            .chain(indexed("L", n))
            .collect();
        let rows: Vec<Vec<String>> = self
            .states
            .iter()
            .enumerate()
            .map(|(t, z)| {
                let mut row = vec![t.to_string()];
                push_vector(&mut row, Some(z), n);
                push_vector(&mut row, self.fitting_errors.get(t), p);
                push_vector(&mut row, self.corrections.get(t), n);
                row
            })
            .collect();
        write_rows(writer, &header, &rows)
    }
}

pub fn run_observer(spec: &ObserverSpec, z0: &DVector<f64>, outputs: &[DVector<f64>]) -> Result<ObserverLog> {
    check_dim("observer initial state", spec.model.n(), z0.len())?;
    let mut log = ObserverLog::new(z0.clone());
    for y in outputs {
        log.push(spec, y)?;
    }
    Ok(log)
}
