use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};

/// Continuous-time vector field `x' = F(x)` with its Jacobian.
pub trait Drift {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// One classical fourth-order Runge-Kutta step of `x' = drift(x)`.
pub fn rk4_step<F>(drift: F, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
    }
    let k1 = drift(x);
    check_finite("rk4 stage 1", k1.as_slice())?;
    let k2 = drift(&(x + &k1 * (0.5 * dt)));
    check_finite("rk4 stage 2", k2.as_slice())?;
    let k3 = drift(&(x + &k2 * (0.5 * dt)));
    check_finite("rk4 stage 3", k3.as_slice())?;
    let k4 = drift(&(x + &k3 * dt));
    check_finite("rk4 stage 4", k4.as_slice())?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    check_finite("rk4 result", next.as_slice())?;
    Ok(next)
}

/// Jacobian of [`rk4_step`] with respect to `x`, by the chain rule through
/// the four stages.
pub fn rk4_step_jacobian<D: Drift + ?Sized>(drift: &D, x: &DVector<f64>, dt: f64) -> DMatrix<f64> {
    let n = x.len();
    let eye = DMatrix::<f64>::identity(n, n);

    let k1 = drift.eval(x);
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = drift.eval(&x2);
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = drift.eval(&x3);
    let x4 = x + &k3 * dt;

    let d1 = drift.jacobian(x);
    let d2 = drift.jacobian(&x2) * (&eye + &d1 * (0.5 * dt));
    let d3 = drift.jacobian(&x3) * (&eye + &d2 * (0.5 * dt));
    let d4 = drift.jacobian(&x4) * (&eye + &d3 * dt);

    eye + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (dt / 6.0)
}
