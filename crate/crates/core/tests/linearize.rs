mod common;

use std::sync::Arc;

use gbf_core::benchmarks::{builtin_model, FnPlant, LinearPlant};
use gbf_core::linearize::{build_schedule, interp, linearize_at, linearize_with_step, LinearizationSchedule};
use gbf_core::sim::{simulate, ClosedLoopModel};
use gbf_core::stl::{parse_formula, robustness, Variables};
use gbf_core::{BoxSet, Matrix, PiecewiseLinearSignal};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(plant: impl gbf_core::sim::Plant + 'static, n: usize, m: usize) -> ClosedLoopModel {
    ClosedLoopModel {
        name: "test".into(),
        plant: Arc::new(plant),
        controller: None,
        input_box: BoxSet::new(vec![-5.0; m], vec![5.0; m]).unwrap(),
        init_box: BoxSet::new(vec![-5.0; n], vec![5.0; n]).unwrap(),
        horizon: 1.0,
        step: 0.01,
        spec: String::new(),
        variables: Variables::new(n),
        constants: Vec::new(),
        jacobian: None,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_row_major(r, c, (0..r * c).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).unwrap()
}

#[test]
fn scalar_examples() {
    let sq = model(FnPlant::new(1, 1, |x, _, out| out[0] = -x[0] * x[0]), 1, 1);
    let l = linearize_at(&sq, &[2.0], &[0.0]).unwrap();
    assert!((l.a[(0, 0)] + 4.0).abs() < 1e-6);

    let bil = model(FnPlant::new(1, 1, |x, w, out| out[0] = x[0] * w[0]), 1, 1);
    let l = linearize_at(&bil, &[2.0], &[3.0]).unwrap();
    assert!((l.a[(0, 0)] - 3.0).abs() < 1e-8);
    assert!((l.b[(0, 0)] - 2.0).abs() < 1e-8);
    assert_eq!(l.rhs_evals, 4);
}

#[test]
fn recovers_random_linear_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let a = random_matrix(&mut rng, 4, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let m = model(LinearPlant::new(a.clone(), b.clone()).unwrap(), 4, 2);
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let l = linearize_at(&m, &x, &[0.3, -0.2]).unwrap();
        assert!(l.a.max_abs_diff(&a) < 1e-7, "{}", l.a.max_abs_diff(&a));
        assert!(l.b.max_abs_diff(&b) < 1e-7);
    }
}

/// `f = [sin(x1) x2 + w, exp(0.3 x1) − x2², tanh(w) x1]` and its exact Jacobians.
fn curved() -> (ClosedLoopModel, impl Fn(&[f64], f64) -> (Matrix, Matrix)) {
    let m = model(
        FnPlant::new(3, 1, |x, w, out| {
            out[0] = x[0].sin() * x[1] + w[0];
            out[1] = (0.3 * x[0]).exp() - x[1] * x[1];
            out[2] = w[0].tanh() * x[0];
        }),
        3,
        1,
    );
    let exact = |x: &[f64], w: f64| {
        let a = Matrix::from_rows(&[
            &[x[0].cos() * x[1], x[0].sin(), 0.0],
            &[0.3 * (0.3 * x[0]).exp(), -2.0 * x[1], 0.0],
            &[w.tanh(), 0.0, 0.0],
        ])
        .unwrap();
        let b = Matrix::from_rows(&[&[1.0], &[0.0], &[x[0] / w.cosh().powi(2)]]).unwrap();
        (a, b)
    };
    (m, exact)
}

#[test]
fn central_differences_converge_quadratically() {
    let (m, exact) = curved();
    let (x, w) = ([0.7, -1.1, 0.4], 0.9);
    let (a, b) = exact(&x, w);
    let err = |eps: f64| {
        let l = linearize_with_step(&m, &x, &[w], eps).unwrap();
        l.a.max_abs_diff(&a).max(l.b.max_abs_diff(&b))
    };
    let e: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|h| err(*h)).collect();
    for pair in e.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((3.5..=4.5).contains(&ratio), "errors {e:?}");
    }
    assert!(err(1e-6) < 1e-8);
}

#[test]
fn schedules_of_linear_models_are_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_matrix(&mut rng, 3, 3);
    let b = random_matrix(&mut rng, 3, 1);
    let m = model(LinearPlant::new(a.clone(), b.clone()).unwrap(), 3, 1);
    let grid = m.grid().unwrap();
    let w = PiecewiseLinearSignal::new(grid, 1, grid.nodes().map(|t| (3.0 * t).sin()).collect()).unwrap();
    let traj = simulate(&m, &[0.1, 0.2, -0.3], &w, grid).unwrap().trajectory;

    let s = build_schedule(&m, &traj, &w, 0.8, 17).unwrap();
    assert_eq!(s.times().len(), 17);
    assert_eq!((s.times()[0], *s.times().last().unwrap()), (0.0, 0.8));
    for t in [0.0, 0.13, 0.4, 0.77, 0.8] {
        let (ai, bi) = interp(&s, t).unwrap();
        assert!(ai.max_abs_diff(&a) < 1e-7);
        assert!(bi.max_abs_diff(&b) < 1e-7);
    }
    assert!(interp(&s, 0.81).is_err());

    let ends = build_schedule(&m, &traj, &w, 0.5, 2).unwrap();
    assert_eq!(ends.times(), &[0.0, 0.5]);
}

#[test]
fn fnn_case_nominal_schedule() {
    let m = builtin_model("fnn-nonlinear").unwrap();
    let grid = m.grid().unwrap();
    let w = PiecewiseLinearSignal::constant(grid, &[0.0]);
    let traj = simulate(&m, m.init_box.lower(), &w, grid).unwrap().trajectory;
    let cert = robustness(&parse_formula(&m.spec, &m.variables).unwrap(), &traj).unwrap();
    let s = build_schedule(&m, &traj, &w, cert.critical_time, 100).unwrap();
    assert_eq!(s.times().len(), 100);
    assert!(s.a_samples().iter().chain(s.b_samples()).all(|mat| mat.is_finite()));
    assert!(s.a_samples().iter().all(|a| a.rows() == 3 && a.cols() == 3));
    assert!(s.b_samples().iter().all(|b| b.rows() == 3 && b.cols() == 1));
}

fn schedule() -> impl Strategy<Value = LinearizationSchedule> {
    (2..=8usize, 1..=3usize).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(0.05..1.0f64, k - 1),
            prop::collection::vec(-3.0..3.0f64, k * n * n),
            prop::collection::vec(-3.0..3.0f64, k * n),
        )
            .prop_map(move |(gaps, av, bv)| {
                let mut times = vec![0.0];
                for g in gaps {
                    times.push(times.last().unwrap() + g);
                }
                let a = av.chunks(n * n).map(|c| Matrix::from_row_major(n, n, c.to_vec()).unwrap()).collect();
                let b = bv.chunks(n).map(|c| Matrix::from_row_major(n, 1, c.to_vec()).unwrap()).collect();
                LinearizationSchedule::from_samples(times, a, b).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn interpolation_is_continuous_and_exact_at_samples(s in schedule(), frac in 0.0..1.0f64) {
        let times = s.times().to_vec();
        for (k, t) in times.iter().enumerate() {
            let (a, b) = interp(&s, *t).unwrap();
            prop_assert_eq!(&a, &s.a_samples()[k]);
            prop_assert_eq!(&b, &s.b_samples()[k]);
            // Approaching a sample from either side lands on the same matrices.
            for side in [-1.0, 1.0] {
                let near = t + side * 1e-12;
                if near < 0.0 || near > s.span() {
                    continue;
                }
                let (an, bn) = interp(&s, near).unwrap();
                prop_assert!(an.max_abs_diff(&a) < 1e-7 && bn.max_abs_diff(&b) < 1e-7);
            }
        }
        for k in 0..times.len() - 1 {
            let t = times[k] + frac * (times[k + 1] - times[k]);
            let (a, _) = interp(&s, t).unwrap();
            let alpha = (times[k + 1] - t) / (times[k + 1] - times[k]);
            let hand = Matrix::lincomb(alpha, &s.a_samples()[k], 1.0 - alpha, &s.a_samples()[k + 1]);
            prop_assert!(a.max_abs_diff(&hand) < 1e-12);
        }
    }
}

#[test]
fn random_smooth_models_linearize_finitely() {
    for seed in 0..6 {
        let inst = common::random_smooth_model(seed, 1.0, 0.01);
        let m = inst.model.input_dim();
        let l = linearize_at(&inst.model, &inst.x0, &vec![0.1; m]).unwrap();
        assert!(l.a.is_finite() && l.b.is_finite());
        assert_eq!((l.a.rows(), l.b.cols()), (inst.model.state_dim(), m));
    }
}
