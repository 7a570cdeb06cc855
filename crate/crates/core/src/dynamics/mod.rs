//! Disturbed discrete-time nonlinear systems: models, constraint sets,
//! discretization, noise generation and simulation.

mod integrate;
mod model;
mod noise;
mod sets;
mod simulate;

pub use integrate::{rk4_step, rk4_step_jacobian, Drift};
pub use model::{
    batch_reactor_drift, BatchReactor, Dynamics, LinearModel, SystemModel, REACTOR_DT, REACTOR_K1,
    REACTOR_K2,
};
pub use noise::{draw_noise, project_onto, NoiseSequences, NoiseSpec};
pub use sets::BoxSet;
pub use simulate::{simulate, TrajectoryLog, SET_TOLERANCE};
