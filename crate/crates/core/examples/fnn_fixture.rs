//! Builds the FNN case-study controller from a seed and two output-layer
//! knobs, reports nominal robustness and a local search from w = 0.
//!
//! Hidden layers are drawn from a seed; the output layer is fitted by least
//! squares to the saturated feedback law `y = bias − gain · x1` over the
//! operating region.
//!
//! cargo run --release --example fnn_fixture -- <seed> <gain> <bias> [write]

use gbf_core::adjoint::{local_search, LocalSearchOptions};
use gbf_core::benchmarks::fnn_nonlinear;
use gbf_core::nn::{write_network, Activation, FnnSpec, Layer, Network};
use gbf_core::sim::simulate;
use gbf_core::stl::{parse_formula, robustness};
use gbf_core::{Matrix, PiecewiseLinearSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTHS: [usize; 6] = [2, 8, 8, 8, 4, 1];

fn hidden(seed: u64) -> Vec<Layer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = move |scale: f64| (rng.random::<f64>() * 2.0 - 1.0) * scale;
    let mut layers = Vec::new();
    for l in 0..WIDTHS.len() - 2 {
        let (i, o) = (WIDTHS[l], WIDTHS[l + 1]);
        let mut w = Vec::with_capacity(i * o);
        for r in 0..i {
            for c in 0..o {
                w.push(if l == 0 {
                    // x1 drives the features; x2 (up to 5) only weakly.
                    if r == 0 { u(0.8) } else { u(0.15) }
                } else {
                    // Near-identity mixing keeps later layers out of saturation.
                    u(0.25) + if r == c { 1.2 } else { 0.0 }
                });
            }
        }
        let b: Vec<f64> = (0..o).map(|_| u(0.1)).collect();
        let w = Matrix::from_row_major(i, o, w).unwrap();
        layers.push(Layer::new(w, b, Activation::Tanh).unwrap());
    }
    layers
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
fn cholesky_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for j in 0..n {
        for k in 0..j {
            let l = a[j][k];
            for i in j..n {
                a[i][j] -= a[i][k] * l;
            }
        }
        let d = a[j][j].sqrt();
        for i in j..n {
            a[i][j] /= d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    b
}

fn network(seed: u64, gain: f64, bias: f64) -> FnnSpec {
    let layers = hidden(seed);
    let trunk = FnnSpec::new(layers.clone()).unwrap();
    let width = WIDTHS[WIDTHS.len() - 2];
    let dim = width + 1;
    let mut ata = vec![vec![0.0; dim]; dim];
    let mut atb = vec![0.0; dim];
    for a in 0..=40 {
        for b in 0..=60 {
            let x1 = -1.0 + 2.0 * a as f64 / 40.0;
            let x2 = -0.5 + 6.0 * b as f64 / 60.0;
            let mut row = trunk.eval(&[x1, x2]).unwrap();
            row.push(1.0);
            let target = (bias - gain * x1).clamp(-0.9, 0.9).atanh();
            for i in 0..dim {
                atb[i] += row[i] * target;
                for j in 0..dim {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
    }
    for (i, r) in ata.iter_mut().enumerate() {
        r[i] += 1e-6;
    }
    let v = cholesky_solve(ata, atb);
    let out = Layer::new(
        Matrix::from_row_major(width, 1, v[..width].to_vec()).unwrap(),
        vec![v[width]],
        Activation::Tanh,
    )
    .unwrap();
    let mut layers = layers;
    layers.push(out);
    let net = FnnSpec::new(layers).unwrap();
    let mut worst = 0.0f64;
    for a in 0..=20 {
        for b in 0..=30 {
            let (x1, x2) = (-1.0 + 0.1 * a as f64, -0.5 + 0.2 * b as f64);
            let y = net.eval(&[x1, x2]).unwrap()[0];
            worst = worst.max((y - (bias - gain * x1)).abs());
        }
    }
    println!("fit: max abs error {worst:.2e}");
    net
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map_or(1, |s| s.parse().unwrap());
    let gain: f64 = args.get(1).map_or(1.0, |s| s.parse().unwrap());
    let bias: f64 = args.get(2).map_or(0.0, |s| s.parse().unwrap());
    let net = if std::env::var("AFFINE").is_ok() {
        // The target law itself, as a single identity layer.
        let w = Matrix::from_row_major(2, 1, vec![-gain, 0.0]).unwrap();
        FnnSpec::new(vec![Layer::new(w, vec![bias], Activation::Identity).unwrap()]).unwrap()
    } else {
        network(seed, gain, bias)
    };
    let model = fnn_nonlinear(net.clone()).unwrap();
    let phi = parse_formula(&model.spec, &model.variables).unwrap();
    let grid = model.grid().unwrap();
    let x0 = model.init_box.lower().to_vec();
    for w in [0.0, -0.1, 0.1] {
        let sig = PiecewiseLinearSignal::constant(grid, &[w]);
        let out = simulate(&model, &x0, &sig, grid).unwrap();
        let cert = robustness(&phi, &out.trajectory).unwrap();
        let x1: Vec<f64> = (0..grid.len()).step_by(50).map(|k| out.trajectory.plant(k)[0]).collect();
        println!(
            "w={w:+.2} d={:.6} t*={:.2} x1={:.3?} x2(T)={:.3}",
            cert.robustness,
            cert.critical_time,
            x1,
            out.trajectory.plant(grid.len() - 1)[1]
        );
    }
    let w0 = PiecewiseLinearSignal::constant(grid, &[0.0]);
    match local_search(&model, &phi, &x0, &w0, &LocalSearchOptions::default()) {
        Ok(r) => println!(
            "local: d0={:.6} best={:.3e} iters={} stop={:?}",
            r.initial_robustness, r.result.best_robustness, r.iterations, r.stop
        ),
        Err(e) => println!("local search failed: {e}"),
    }
    if args.get(3).map(String::as_str) == Some("write") {
        let text = format!(
            "# FNN case-study controller: 5 tanh layers; hidden seed {seed}, output layer fitted to y = {bias:?} - {gain:?} x1\n{}",
            write_network(&Network::Fnn(net))
        );
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fnn_nonlinear.net"), text).unwrap();
        println!("fixture written");
    }
}
