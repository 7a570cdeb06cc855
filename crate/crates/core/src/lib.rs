//! Suboptimal moving horizon estimation for nonlinear discrete-time systems.
//!
//! The estimator warm-starts every window at a candidate built from an
//! auxiliary output-injection observer and accepts any feasible iterate
//! whose cost does not exceed the candidate's. The crate also contains the
//! stability bookkeeping (cost bound, error-envelope constants) and a
//! harness for the batch reactor example.

pub mod csvio;
pub mod dynamics;
mod error;
pub(crate) mod serde_util;

pub use error::{Error, Result};
pub mod mhe;
pub mod observer;
pub mod solver;
pub mod analysis;
pub mod harness;
