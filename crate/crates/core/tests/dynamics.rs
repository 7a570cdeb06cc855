use nalgebra::{dvector, DVector};
use proptest::prelude::*;
use suboptimal_mhe::dynamics::{
    batch_reactor_drift, draw_noise, rk4_step, simulate, NoiseSpec, SystemModel, REACTOR_K1, REACTOR_K2,
};

// Explicit Euler on plain arrays, written independently of the library drift.
fn euler_reactor(x: [f64; 2], horizon: f64, steps: usize) -> [f64; 2] {
    let dt = horizon / steps as f64;
    let (mut a, mut b) = (x[0], x[1]);
    for _ in 0..steps {
        let r = REACTOR_K1 * a * a - REACTOR_K2 * b;
        a -= 2.0 * r * dt;
        b += r * dt;
    }
    [a, b]
}

#[test]
fn rk4_step_matches_fine_euler() {
    let x = dvector![5.0, 2.0];
    let rk = rk4_step(|s| batch_reactor_drift(s).unwrap(), &x, 0.1).unwrap();
    let oracle = euler_reactor([5.0, 2.0], 0.1, 1_000_000);
    for k in 0..2 {
        assert!((rk[k] - oracle[k]).abs() < 1e-4, "entry {k}: {} vs {}", rk[k], oracle[k]);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let x = dvector![5.0, 2.0];
    let drift = |s: &DVector<f64>| batch_reactor_drift(s).unwrap();
    let oracle = euler_reactor([5.0, 2.0], 0.1, 1_000_000);
    let err = |substeps: usize| {
        let mut s = x.clone();
        for _ in 0..substeps {
            s = rk4_step(drift, &s, 0.1 / substeps as f64).unwrap();
        }
        ((s[0] - oracle[0]).powi(2) + (s[1] - oracle[1]).powi(2)).sqrt()
    };
    let ratio = err(1) / err(2);
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn rk4_exact_for_constant_field() {
    let c = dvector![0.3, -1.2];
    let x = dvector![1.0, 2.0];
    let next = rk4_step(|_| c.clone(), &x, 0.25).unwrap();
    assert!((next - (&x + &c * 0.25)).amax() < 1e-15);
}

#[test]
fn undisturbed_reactor_conserves_linear_invariant() {
    let model = SystemModel::batch_reactor();
    let mut x = dvector![5.0, 2.0];
    let invariant = x[0] + 2.0 * x[1];
    for _ in 0..1000 {
        x = model.f(&x).unwrap();
        assert!((x[0] + 2.0 * x[1] - invariant).abs() <= 1e-12);
    }
}

#[test]
fn noise_variance_matches_covariance() {
    let (w, v) = draw_noise(&NoiseSpec::batch_reactor(3), 10_000).unwrap();
    for k in 0..2 {
        let var = w.iter().map(|s| s[k] * s[k]).sum::<f64>() / w.len() as f64;
        assert!((var - 0.01).abs() < 0.001, "w{k} variance {var}");
    }
    let var = v.iter().map(|s| s[0] * s[0]).sum::<f64>() / v.len() as f64;
    assert!((var - 0.04).abs() < 0.004);
}

proptest! {
    #[test]
    fn output_is_sqrt2_lipschitz(a in prop::array::uniform2(-10.0f64..10.0), b in prop::array::uniform2(-10.0f64..10.0)) {
        let model = SystemModel::batch_reactor();
        let (a, b) = (dvector![a[0], a[1]], dvector![b[0], b[1]]);
        let lhs = (model.h(&a) - model.h(&b)).norm();
        prop_assert!(lhs <= model.lipschitz_h() * (&a - &b).norm() + 1e-12);
    }

    #[test]
    fn rk4_preserves_invariant_anywhere(x in prop::array::uniform2(0.0f64..10.0)) {
        let model = SystemModel::batch_reactor();
        let x = dvector![x[0], x[1]];
        let next = model.f(&x).unwrap();
        let scale = 1.0 + x[0] + 2.0 * x[1];
        prop_assert!((next[0] + 2.0 * next[1] - x[0] - 2.0 * x[1]).abs() <= 1e-14 * scale);
    }

    #[test]
    fn replay_is_bit_identical(seed in any::<u64>(), steps in 0usize..40) {
        let model = SystemModel::batch_reactor();
        let (w, v) = draw_noise(&NoiseSpec::batch_reactor(seed), steps).unwrap();
        let log = simulate(&model, &dvector![5.0, 2.0], &w, &v, steps).unwrap();
        prop_assert_eq!(log.states.len(), steps + 1);
        prop_assert_eq!(log.outputs.len(), steps);
        let replay = simulate(&model, &log.states[0], &log.disturbances, &log.noises, steps).unwrap();
        prop_assert_eq!(&replay.states, &log.states);
        prop_assert_eq!(&replay.outputs, &log.outputs);
        for (k, wk) in w.iter().enumerate().take(steps) {
            prop_assert_eq!(&log.states[k + 1], &(model.f(&log.states[k]).unwrap() + wk));
        }
    }

    #[test]
    fn noise_is_seed_deterministic(seed in any::<u64>()) {
        let spec = NoiseSpec::batch_reactor(seed);
        prop_assert_eq!(draw_noise(&spec, 20).unwrap(), draw_noise(&spec, 20).unwrap());
    }
}
