//! Stability bookkeeping: cost-bound factors, error-envelope constants,
//! empirical envelope fits and checks, accuracy metrics.

mod constants;
mod envelope;
mod metrics;

pub use constants::{
    lemma1_bound, rho_bar_1, rho_bar_2, theorem1_constants, theorem1_constants_from_factors, CostBoundConstants,
    DetectabilityConstants, RgesConstants, TheoremConstants,
};
pub use envelope::{
    check_envelope, check_rges_envelope, discounted_sums, fit_detectability_envelope, fit_observer_envelope,
    rate_grid, Envelope, EnvelopeSample, MarginReport, MarginRow, FIT_FLOOR,
};
pub use metrics::{rmse, Rmse};
