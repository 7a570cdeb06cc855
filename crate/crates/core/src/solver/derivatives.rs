use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::mhe::{rollout, DecisionVector, HorizonProblem, WindowRollout};

/// Gradient of the window cost with respect to `(chi0, omega_0..omega_{M-1})`,
/// stacked like [`DecisionVector::to_flat`].
///
/// Reverse accumulation through `chi(i+1) = f(chi(i)) + omega(i)`: the
/// adjoint of `chi(i)` collects the residual term of stage `i` and the
/// transported adjoint of `chi(i+1)`.
pub fn cost_gradient(problem: &HorizonProblem<'_>, d: &DecisionVector) -> Result<DVector<f64>> {
    let roll = rollout(problem, d)?;
    Ok(gradient_from_rollout(problem, d, &roll))
}

pub(crate) fn gradient_from_rollout(
    problem: &HorizonProblem<'_>,
    d: &DecisionVector,
    roll: &WindowRollout,
) -> DVector<f64> {
    let model = problem.model();
    let cost = problem.cost();
    let n = model.n();
    let m = problem.len();
    let mut grad = DVector::zeros(n * (m + 1));
    let mut adjoint = DVector::<f64>::zeros(n);
    for i in (0..m).rev() {
        let g_omega = cost.disturbance_weight() * &d.omegas[i] * 2.0 + &adjoint;
        grad.rows_mut(n * (i + 1), n).copy_from(&g_omega);
        let chi = &roll.states[i];
        let f_jac = model.dynamics().transition_jacobian(chi);
        let h_jac = model.dynamics().output_jacobian(chi);
        adjoint = f_jac.transpose() * &adjoint
            - h_jac.transpose() * (cost.noise_weight() * &roll.residuals[i]) * 2.0;
    }
    let g_chi0 = adjoint + cost.prior_weight() * (&d.chi0 - problem.prior()) * 2.0;
    grad.rows_mut(0, n).copy_from(&g_chi0);
    grad
}

/// Weighted residual vector `r` with `cost = |r|^2`:
/// `[U_p (chi0 - xbar); U_w omega_0; U_v nu_0; ...; U_w omega_{M-1}; U_v nu_{M-1}]`.
pub(crate) fn weighted_residuals(
    problem: &HorizonProblem<'_>,
    d: &DecisionVector,
    roll: &WindowRollout,
) -> DVector<f64> {
    let cost = problem.cost();
    let n = problem.model().n();
    let p = problem.model().p();
    let m = problem.len();
    let mut r = DVector::zeros(n + m * (n + p));
    r.rows_mut(0, n)
        .copy_from(&(cost.prior_root() * (&d.chi0 - problem.prior())));
    for i in 0..m {
        let base = n + i * (n + p);
        r.rows_mut(base, n).copy_from(&(cost.disturbance_root() * &d.omegas[i]));
        r.rows_mut(base + n, p)
            .copy_from(&(cost.noise_root() * &roll.residuals[i]));
    }
    r
}

/// Jacobian of [`weighted_residuals`] by forward sensitivities
/// `S(i) = d chi(i) / d decision`.
pub(crate) fn residual_jacobian(problem: &HorizonProblem<'_>, roll: &WindowRollout) -> DMatrix<f64> {
    let model = problem.model();
    let cost = problem.cost();
    let n = model.n();
    let p = model.p();
    let m = problem.len();
    let dim = n * (m + 1);
    let mut jac = DMatrix::zeros(n + m * (n + p), dim);
    jac.view_mut((0, 0), (n, n)).copy_from(cost.prior_root());

    let mut sens = DMatrix::<f64>::zeros(n, dim);
    sens.view_mut((0, 0), (n, n)).fill_with_identity();
    for i in 0..m {
        let base = n + i * (n + p);
        let col = n * (i + 1);
        jac.view_mut((base, col), (n, n)).copy_from(cost.disturbance_root());
        let chi = &roll.states[i];
        let h_jac = model.dynamics().output_jacobian(chi);
        let block = -(cost.noise_root() * h_jac * &sens);
        jac.view_mut((base + n, 0), (p, dim)).copy_from(&block);

        let f_jac = model.dynamics().transition_jacobian(chi);
        sens = f_jac * sens;
        for k in 0..n {
            sens[(k, col + k)] += 1.0;
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{LinearModel, SystemModel};
    use crate::mhe::CostSpec;
    use nalgebra::dvector;
    use std::sync::Arc;

    #[test]
    fn identity_model_single_stage_closed_form() {
        // f = id, h = id, M = 1:
        // J = |chi - xbar|_P^2 + |w|_W^2 + |y - chi|_V^2
        // dJ/dchi = 2P(chi - xbar) - 2V(y - chi), dJ/dw = 2W w.
        let eye = nalgebra::DMatrix::identity(2, 2);
        let model = SystemModel::new(Arc::new(LinearModel::new(eye.clone(), eye.clone()).unwrap()), 1.0).unwrap();
        let p = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let w = eye.clone() * 3.0;
        let v = eye.clone() * 4.0;
        let cost = CostSpec::new(p.clone(), w.clone(), v.clone()).unwrap();
        let xbar = dvector![0.5, -1.0];
        let y = dvector![1.0, 2.0];
        let problem = HorizonProblem::new(&model, &cost, xbar.clone(), vec![y.clone()], 0).unwrap();
        let chi = dvector![1.5, 0.25];
        let om = dvector![-0.5, 0.75];
        let d = DecisionVector::new(chi.clone(), vec![om.clone()]);
        let g = cost_gradient(&problem, &d).unwrap();
        let expect_chi = &p * (&chi - &xbar) * 2.0 - &v * (&y - &chi) * 2.0;
        let expect_w = &w * &om * 2.0;
        assert!((g.rows(0, 2) - expect_chi).amax() < 1e-14);
        assert!((g.rows(2, 2) - expect_w).amax() < 1e-14);
    }

    #[test]
    fn gradient_agrees_with_jacobian_transpose_residual() {
        let model = SystemModel::batch_reactor();
        let cost = CostSpec::batch_reactor();
        let ys: Vec<_> = [6.8, 6.7, 6.9, 6.4].iter().map(|v| dvector![*v]).collect();
        let problem = HorizonProblem::new(&model, &cost, dvector![3.0, 0.5], ys, 0).unwrap();
        let d = DecisionVector::new(
            dvector![3.3, 0.2],
            vec![dvector![0.1, -0.05], dvector![0.0, 0.2], dvector![-0.1, 0.1], dvector![0.05, 0.05]],
        );
        let roll = rollout(&problem, &d).unwrap();
        let r = weighted_residuals(&problem, &d, &roll);
        assert!((r.norm_squared() - roll.cost).abs() < 1e-10 * roll.cost);
        let jac = residual_jacobian(&problem, &roll);
        let via_jac = jac.transpose() * r * 2.0;
        let adjoint = gradient_from_rollout(&problem, &d, &roll);
        assert!((via_jac - &adjoint).amax() < 1e-9 * adjoint.amax().max(1.0));
    }
}
