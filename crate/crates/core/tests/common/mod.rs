#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use suboptimal_mhe::dynamics::{BatchReactor, BoxSet, LinearModel, SystemModel};
use suboptimal_mhe::mhe::{check_feasible, CostSpec, DecisionVector, HorizonProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Random symmetric positive definite matrix `B'B + eps I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (b.transpose() * b + DMatrix::identity(n, n) * 0.2) * scale
}

/// An owned estimation window with a feasible candidate.
pub struct WindowCase {
    pub model: SystemModel,
    pub cost: CostSpec,
    pub prior: DVector<f64>,
    pub measurements: Vec<DVector<f64>>,
    pub start: usize,
    pub candidate: DecisionVector,
}

impl WindowCase {
    pub fn problem(&self) -> HorizonProblem<'_> {
        HorizonProblem::new(&self.model, &self.cost, self.prior.clone(), self.measurements.clone(), self.start).unwrap()
    }
}

/// Random reactor window of length 1..=10. Odd cases carry box constraints
/// on states and disturbances; the candidate is redrawn until feasible.
pub fn random_reactor_window(rng: &mut ChaCha8Rng, index: usize) -> WindowCase {
    let boxed = index % 2 == 1;
    let reactor = Arc::new(BatchReactor::default());
    let model = if boxed {
        SystemModel::with_sets(
            reactor,
            BoxSet::new(DVector::from_element(2, 0.0), DVector::from_element(2, 10.0)).unwrap(),
            BoxSet::new(DVector::from_element(2, -0.4), DVector::from_element(2, 0.4)).unwrap(),
            BoxSet::unbounded(1),
            std::f64::consts::SQRT_2,
        )
        .unwrap()
    } else {
        SystemModel::batch_reactor()
    };
    let cost = if index.is_multiple_of(3) {
        CostSpec::batch_reactor()
    } else {
        CostSpec::new(random_spd(rng, 2, 1.0), random_spd(rng, 2, 50.0), DMatrix::from_element(1, 1, rng.random_range(1.0..50.0)))
            .unwrap()
    };
    let m = rng.random_range(1..=10);
    let prior = uniform_vec(rng, 2, 1.0, 6.0);
    let measurements: Vec<_> = (0..m).map(|_| uniform_vec(rng, 1, 3.0, 9.0)).collect();
    loop {
        let candidate = DecisionVector::new(
            &prior + uniform_vec(rng, 2, -1.0, 1.0),
            (0..m).map(|_| uniform_vec(rng, 2, -0.3, 0.3)).collect(),
        );
        let case = WindowCase {
            model: model.clone(),
            cost: cost.clone(),
            prior: prior.clone(),
            measurements: measurements.clone(),
            start: rng.random_range(0..50),
            candidate,
        };
        if check_feasible(&case.problem(), &case.candidate).unwrap().is_feasible() {
            return case;
        }
    }
}

/// Linear model `x+ = A x + w`, `y = C x + v` with random stable-ish `A`.
pub fn random_linear_window(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> WindowCase {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6));
    let c = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    let model = SystemModel::new(Arc::new(LinearModel::new(a, c).unwrap()), 1.0).unwrap();
    let cost = CostSpec::new(random_spd(rng, n, 1.0), random_spd(rng, n, 10.0), random_spd(rng, p, 5.0)).unwrap();
    let prior = uniform_vec(rng, n, -2.0, 2.0);
    let measurements = (0..m).map(|_| uniform_vec(rng, p, -3.0, 3.0)).collect();
    let candidate = DecisionVector::new(prior.clone(), vec![DVector::zeros(n); m]);
    WindowCase { model, cost, prior, measurements, start: 0, candidate }
}

/// Closed-form minimizer of the linear-quadratic window cost from the
/// normal equations `(G' Wt G) d = G' Wt b`, stacking the prior, disturbance
/// and output terms as `G d - b` with block weights `Wt`.
pub fn weighted_least_squares(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    p_w: &DMatrix<f64>,
    w_w: &DMatrix<f64>,
    v_w: &DMatrix<f64>,
    prior: &DVector<f64>,
    ys: &[DVector<f64>],
) -> DVector<f64> {
    let n = a.nrows();
    let p = c.nrows();
    let m = ys.len();
    let dim = n * (m + 1);
    let rows = n + m * (n + p);
    let mut g = DMatrix::zeros(rows, dim);
    let mut b = DVector::zeros(rows);
    let mut weights = DMatrix::zeros(rows, rows);
    g.view_mut((0, 0), (n, n)).fill_with_identity();
    b.rows_mut(0, n).copy_from(prior);
    weights.view_mut((0, 0), (n, n)).copy_from(p_w);
    // state(i) = T_i d, with T_0 = [I 0 ...], T_{i+1} = A T_i + E_i.
    let mut transfer = DMatrix::zeros(n, dim);
    transfer.view_mut((0, 0), (n, n)).fill_with_identity();
    for (i, y) in ys.iter().enumerate() {
        let r = n + i * (n + p);
        g.view_mut((r, n * (i + 1)), (n, n)).fill_with_identity();
        weights.view_mut((r, r), (n, n)).copy_from(w_w);
        g.view_mut((r + n, 0), (p, dim)).copy_from(&(c * &transfer));
        b.rows_mut(r + n, p).copy_from(y);
        weights.view_mut((r + n, r + n), (p, p)).copy_from(v_w);
        let mut next = a * &transfer;
        for k in 0..n {
            next[(k, n * (i + 1) + k)] += 1.0;
        }
        transfer = next;
    }
    let gt_w = g.transpose() * &weights;
    (&gt_w * &g).lu().solve(&(gt_w * b)).expect("normal equations are nonsingular")
}

/// Central-difference gradient of the window cost.
pub fn fd_gradient(problem: &HorizonProblem<'_>, d: &DecisionVector) -> DVector<f64> {
    let n = d.chi0.len();
    let flat = d.to_flat();
    let cost = |v: &DVector<f64>| suboptimal_mhe::mhe::eval_cost(problem, &DecisionVector::from_flat(n, v).unwrap()).unwrap();
    DVector::from_fn(flat.len(), |i, _| {
        let h = 1e-6 * flat[i].abs().max(1.0);
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        (cost(&plus) - cost(&minus)) / (2.0 * h)
    })
}

/// Perturbed candidate used as a gradient evaluation point.
pub fn perturbed(rng: &mut ChaCha8Rng, d: &DecisionVector) -> DecisionVector {
    DecisionVector::new(&d.chi0 + uniform_vec(rng, d.chi0.len(), -0.5, 0.5), d.omegas.clone())
}

/// Reactor window with exactly `m` measurements.
pub fn reactor_window_of_len(rng: &mut ChaCha8Rng, index: usize, m: usize) -> WindowCase {
    loop {
        let case = random_reactor_window(rng, index);
        if case.measurements.len() == m {
            return case;
        }
    }
}
