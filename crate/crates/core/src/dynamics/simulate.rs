use std::io::Write;

use log::warn;
use nalgebra::DVector;

use super::model::SystemModel;
use crate::csvio::{indexed, push_vector, write_rows};
use crate::error::{check_dim, Error, Result};

/// Membership tolerance used when flagging states that leave the state set.
pub const SET_TOLERANCE: f64 = 1e-9;

/// States, outputs and the disturbance/noise realizations that produced them.
///
/// `states` has `T + 1` entries; the other sequences have `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub noises: Vec<DVector<f64>>,
    /// Time indices at which the state was outside the state set.
    pub outside_state_set: Vec<usize>,
}

impl TrajectoryLog {
    pub fn steps(&self) -> usize {
        self.outputs.len()
    }

    /// Writes `t,x1..xn,y1..yp,w1..wn,v1..vp`; the final row has only states.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let p = self.outputs.first().map_or(0, |y| y.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(indexed("x", n))
            .chain(indexed("y", p))
            .chain(indexed("w", n))
            .chain(indexed("v", p))
            .collect();
        let rows: Vec<Vec<String>> = self
            .states
            .iter()
            .enumerate()
            .map(|(t, x)| {
                let mut row = vec![t.to_string()];
                push_vector(&mut row, Some(x), n);
                push_vector(&mut row, self.outputs.get(t), p);
                push_vector(&mut row, self.disturbances.get(t), n);
                push_vector(&mut row, self.noises.get(t), p);
                row
            })
            .collect();
        write_rows(writer, &header, &rows)
    }
}

/// Simulate `x(t+1) = f(x(t)) + w(t)`, `y(t) = h(x(t)) + v(t)` for `steps`
/// steps. Leaving the state set is logged, never projected away.
pub fn simulate(
    model: &SystemModel,
    x0: &DVector<f64>,
    w: &[DVector<f64>],
    v: &[DVector<f64>],
    steps: usize,
) -> Result<TrajectoryLog> {
    check_dim("initial state", model.n(), x0.len())?;
    if w.len() < steps || v.len() < steps {
        return Err(Error::InvalidParameter(format!(
            "need {steps} disturbance/noise samples, got {}/{}",
            w.len(),
            v.len()
        )));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps);
    let mut outside = Vec::new();
    states.push(x0.clone());
    for k in 0..steps {
        check_dim("disturbance", model.n(), w[k].len())?;
        check_dim("noise", model.p(), v[k].len())?;
        let x = &states[k];
        if !model.state_set().contains(x, SET_TOLERANCE) {
            outside.push(k);
        }
        outputs.push(model.h(x) + &v[k]);
        let next = model.f(x)? + &w[k];
        if next.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite(format!("simulated state at t={}", k + 1)));
        }
        states.push(next);
    }
    if !model.state_set().contains(&states[steps], SET_TOLERANCE) {
        outside.push(steps);
    }
    if !outside.is_empty() {
        warn!(
            "trajectory left the state set at {} time(s), first at t={}",
            outside.len(),
            outside[0]
        );
    }
    Ok(TrajectoryLog {
        states,
        outputs,
        disturbances: w[..steps].to_vec(),
        noises: v[..steps].to_vec(),
        outside_state_set: outside,
    })
}
