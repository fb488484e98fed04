#![allow(dead_code)]

use std::sync::Arc;

use gbf_core::benchmarks::FnPlant;
use gbf_core::nn::{Activation, FnnSpec, Layer, Network};
use gbf_core::sim::{ClosedLoopModel, Controller, Wiring};
use gbf_core::stl::{Formula, Predicate, PredicateKind, Variables};
use gbf_core::{BoxSet, Matrix, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Robustness of `f` at every node, straight from the definitions.
///
/// Windows are clipped at the last node; an empty window yields the identity
/// of its aggregate. No argmin bookkeeping, no sharing of subtables.
pub fn brute_table(f: &Formula, traj: &Trajectory) -> Vec<f64> {
    let n = traj.len();
    let step = traj.grid().step();
    let win = |lo: f64, hi: f64| ((lo / step).round() as usize, (hi / step).round() as usize);
    match f {
        Formula::Pred(p) => (0..n).map(|k| pred_value(p, traj.plant(k))).collect(),
        Formula::And(a, b) => zip(brute_table(a, traj), brute_table(b, traj), f64::min),
        Formula::Or(a, b) => zip(brute_table(a, traj), brute_table(b, traj), f64::max),
        Formula::Always(iv, a) | Formula::Eventually(iv, a) => {
            let t = brute_table(a, traj);
            let (wa, wb) = win(iv.lo, iv.hi);
            let always = matches!(f, Formula::Always(..));
            (0..n)
                .map(|k| {
                    let vals = (k + wa..=(k + wb).min(n - 1)).map(|j| t[j]);
                    if always {
                        vals.fold(f64::INFINITY, f64::min)
                    } else {
                        vals.fold(f64::NEG_INFINITY, f64::max)
                    }
                })
                .collect()
        }
        Formula::Until(iv, a, b) | Formula::Release(iv, a, b) => {
            let ta = brute_table(a, traj);
            let tb = brute_table(b, traj);
            let (wa, wb) = win(iv.lo, iv.hi);
            let until = matches!(f, Formula::Until(..));
            (0..n)
                .map(|k| {
                    let mut out = if until { f64::NEG_INFINITY } else { f64::INFINITY };
                    for j in k + wa..=(k + wb).min(n - 1) {
                        let v = if until {
                            (k..j).map(|i| ta[i]).fold(tb[j], f64::min)
                        } else {
                            (k..j).map(|i| ta[i]).fold(tb[j], f64::max)
                        };
                        out = if until { out.max(v) } else { out.min(v) };
                    }
                    out
                })
                .collect()
        }
    }
}

fn zip(a: Vec<f64>, b: Vec<f64>, op: fn(f64, f64) -> f64) -> Vec<f64> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

/// Signed distance to the unsatisfying set, written out per predicate kind.
pub fn pred_value(p: &Predicate, x: &[f64]) -> f64 {
    match &p.kind {
        PredicateKind::Halfspace { coeffs, bound } => {
            let dot: f64 = coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let norm = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
            (bound - dot) / norm
        }
        PredicateKind::Upper { index, bound } => bound - x[*index],
        PredicateKind::Lower { index, bound } => x[*index] - bound,
        PredicateKind::Within { index, lo, hi } => (x[*index] - lo).min(hi - x[*index]),
    }
}

/// `ẋ = A x + 0.5 tanh(C x) + 0.3 sin(x_0) e + B w (+ y)` with random
/// coefficients; half the instances close the loop through a tanh network.
pub struct SmoothInstance {
    pub model: ClosedLoopModel,
    pub x0: Vec<f64>,
}

pub fn random_smooth_model(seed: u64, horizon: f64, step: f64) -> SmoothInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4usize);
    let m = rng.random_range(1..=2usize);
    let mut u = |s: f64| (rng.random::<f64>() * 2.0 - 1.0) * s;
    let a: Vec<f64> = (0..n * n).map(|k| u(0.8) - if k % (n + 1) == 0 { 0.5 } else { 0.0 }).collect();
    let c: Vec<f64> = (0..n * n).map(|_| u(1.0)).collect();
    let b: Vec<f64> = (0..n * m).map(|_| u(1.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| u(1.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| u(1.0)).collect();
    let with_net = seed % 2 == 1;
    let net = with_net.then(|| {
        let w1 = Matrix::from_row_major(n, 3, (0..n * 3).map(|_| u(0.8)).collect()).unwrap();
        let b1 = (0..3).map(|_| u(0.2)).collect();
        let w2 = Matrix::from_row_major(3, 1, (0..3).map(|_| u(0.8)).collect()).unwrap();
        FnnSpec::new(vec![
            Layer::new(w1, b1, Activation::Tanh).unwrap(),
            Layer::new(w2, vec![u(0.1)], Activation::Logistic).unwrap(),
        ])
        .unwrap()
    });
    let cdim = usize::from(with_net);
    let plant = FnPlant::with_controller(n, m, cdim, move |x, w, y, out| {
        for i in 0..n {
            let lin: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            let cx: f64 = (0..n).map(|j| c[i * n + j] * x[j]).sum();
            let bw: f64 = (0..m).map(|j| b[i * m + j] * w[j]).sum();
            out[i] = lin + 0.5 * cx.tanh() + 0.3 * x[0].sin() * e[i] + bw;
        }
        if let Some(y) = y.first() {
            out[n - 1] += y;
        }
    });
    let controller = net.map(|net| Controller {
        network: Network::Fnn(net),
        wiring: Wiring::new(Matrix::identity(n), Matrix::zeros(n, m), vec![0.0; n]).unwrap(),
    });
    let model = ClosedLoopModel {
        name: format!("smooth-{seed}"),
        plant: Arc::new(plant),
        controller,
        input_box: BoxSet::new(vec![-1.0; m], vec![1.0; m]).unwrap(),
        init_box: BoxSet::new(vec![-2.0; n], vec![2.0; n]).unwrap(),
        horizon,
        step,
        spec: String::new(),
        variables: Variables::new(n),
        constants: Vec::new(),
        jacobian: None,
    };
    model.validate().unwrap();
    SmoothInstance { model, x0 }
}

/// Adjoint directional derivative of `J = ½‖x(t*) − r*‖²` along the descent
/// direction, next to a central difference of `J` along the same direction
/// with `t*` and `r*` frozen. Returns `(adjoint, finite_difference)`.
pub fn gradient_check(seed: u64) -> (f64, f64) {
    use gbf_core::adjoint::{descent_directions, solve_costate};
    use gbf_core::linearize::{build_schedule, default_num_samples};
    use gbf_core::sim::simulate;
    use gbf_core::stl::{cost_from_certificate, robustness, Interval};
    use gbf_core::PiecewiseLinearSignal;

    let (horizon, step) = (1.0, 1e-3);
    let inst = random_smooth_model(seed, horizon, step);
    let model = &inst.model;
    let (n, m) = (model.plant_dim(), model.input_dim());
    let grid = model.grid().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let phase: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 6.0).collect();
    let w = PiecewiseLinearSignal::new(
        grid,
        m,
        grid.nodes().flat_map(|t| phase.iter().map(move |p| 0.4 * (4.0 * t + p).sin())).collect(),
    )
    .unwrap();

    // Requirement pinned to one instant, on a random halfspace.
    let k_star = rng.random_range(300..=1000usize);
    let t_star = grid.node(k_star);
    let coeffs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let phi = Formula::always(
        Interval::new(t_star, t_star).unwrap(),
        Formula::pred(PredicateKind::Halfspace { coeffs, bound: 3.0 }),
    );

    let traj = simulate(model, &inst.x0, &w, grid).unwrap().trajectory;
    let cert = robustness(&phi, &traj).unwrap();
    assert_eq!(cert.critical_index, k_star);
    let schedule = build_schedule(model, &traj, &w, t_star, default_num_samples(k_star + 1)).unwrap();
    let terminal: Vec<f64> = traj
        .state(k_star)
        .iter()
        .zip(&cert.augmented_target)
        .map(|(x, r)| x - r)
        .collect();
    let path = solve_costate(&schedule, &terminal, step).unwrap();
    let dir = descent_directions(&path, &schedule).unwrap();

    let dx: Vec<f64> = dir.dx0[..n].to_vec();
    let mut dw = vec![0.0; grid.len() * m];
    for k in 0..dir.len() {
        dw[k * m..(k + 1) * m].copy_from_slice(dir.dw(k));
    }
    let scale = dx.iter().chain(&dw).fold(0.0f64, |a, v| a.max(v.abs()));
    let s = 1e-4 / scale;
    let cost = |sign: f64| {
        let x0: Vec<f64> = inst.x0.iter().zip(&dx).map(|(x, d)| x + sign * s * d).collect();
        let vals: Vec<f64> = w.values().iter().zip(&dw).map(|(v, d)| v + sign * s * d).collect();
        let wp = PiecewiseLinearSignal::new(grid, m, vals).unwrap();
        let tr = simulate(model, &x0, &wp, grid).unwrap().trajectory;
        cost_from_certificate(&tr, &cert).unwrap()
    };
    let fd = (cost(1.0) - cost(-1.0)) / (2.0 * s);
    let adjoint = dir.directional_derivative(&dx, &dw[..dir.len() * m]);
    (adjoint, fd)
}

/// Node spacing of [`random_trajectory`] and of the intervals in [`random_formula`].
pub const MONITOR_STEP: f64 = 0.5;

fn random_leaf(rng: &mut ChaCha8Rng) -> Formula {
    let index = rng.random_range(0..2usize);
    let val = rng.random::<f64>() * 4.0 - 2.0;
    Formula::pred(match rng.random_range(0..4) {
        0 => PredicateKind::Upper { index, bound: val },
        1 => PredicateKind::Lower { index, bound: val },
        2 => PredicateKind::Within { index, lo: val, hi: val + rng.random::<f64>() * 2.0 },
        _ => {
            let a = 0.2 + 0.8 * rng.random::<f64>();
            let a = if rng.random() { -a } else { a };
            PredicateKind::Halfspace { coeffs: vec![a, rng.random::<f64>() * 2.0 - 1.0], bound: val }
        }
    })
}

/// Random formula over two plant coordinates with depth at most `depth`.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> Formula {
    use gbf_core::stl::Interval;
    if depth == 0 || rng.random_range(0..4) == 0 {
        return random_leaf(rng);
    }
    let iv = |rng: &mut ChaCha8Rng| {
        let a = rng.random_range(0..=2u32) as f64;
        let w = rng.random_range(0..=2u32) as f64;
        Interval::new(a * MONITOR_STEP, (a + w) * MONITOR_STEP).unwrap()
    };
    let d = depth - 1;
    match rng.random_range(0..7) {
        0 => random_formula(rng, d).and(random_formula(rng, d)),
        1 => random_formula(rng, d).or(random_formula(rng, d)),
        2 => random_formula(rng, d).implies(random_formula(rng, d)),
        3 => random_formula(rng, d).negate(),
        4 => Formula::always(iv(rng), random_formula(rng, d)),
        5 => Formula::eventually(iv(rng), random_formula(rng, d)),
        _ => {
            let i = iv(rng);
            Formula::until(i, random_formula(rng, d), random_formula(rng, d))
        }
    }
}

/// Random trace on 13..=50 nodes of two plant coordinates and up to one
/// network coordinate, values in `[-3, 3]`.
pub fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    use gbf_core::TimeGrid;
    let len = rng.random_range(13..=50usize);
    let nn = rng.random_range(0..=1usize);
    let grid = TimeGrid::new((len - 1) as f64 * MONITOR_STEP, MONITOR_STEP).unwrap();
    let data = (0..len * (2 + nn)).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
    Trajectory::new(grid, 2, nn, data).unwrap()
}
