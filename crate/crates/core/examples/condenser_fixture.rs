//! Explores condenser-surrogate parameters against the local-search and
//! multi-run protocols, and optionally freezes the controller fixture.
//!
//! cargo run --release --example condenser_fixture -- key=value... [runs=N] [write]
//!
//! Plant keys are the `CondenserParams` fields; controller keys are
//! kp, ki, tau_f, limit.

use gbf_core::adjoint::{local_search, LocalSearchOptions};
use gbf_core::benchmarks::{condenser_surrogate, tanh_pi_rnn, CondenserParams, TanhPiGains};
use gbf_core::nn::{write_network, Network};
use gbf_core::search::{run_experiment, Method, NoClock, SearchConfig};
use gbf_core::sim::simulate;
use gbf_core::stl::{parse_formula, robustness};
use gbf_core::PiecewiseLinearSignal;

fn main() {
    let mut p = CondenserParams::default();
    let mut g = TanhPiGains::default();
    let mut template = SearchConfig::new(Method::Ur, 0);
    let (mut runs, mut write, mut methods) = (0usize, false, vec![Method::Ur, Method::UrGd, Method::Sa, Method::SaGd]);
    for arg in std::env::args().skip(1) {
        if arg == "write" {
            write = true;
            continue;
        }
        let (k, v) = arg.split_once('=').expect("key=value");
        if k == "methods" {
            methods = v.split(',').map(|m| m.parse().unwrap()).collect();
            continue;
        }
        let x: f64 = v.parse().unwrap();
        match k {
            "runs" => runs = x as usize,
            "tau_p" => p.tau_p = x,
            "p0" => p.p0 = x,
            "sa_scale" => template.sa.proposal_scale = x,
            "sa_temp" => template.sa.init_temp_factor = x,
            "sa_cool" => template.sa.cooling = x,
            "tau_q" => p.tau_q = x,
            "gain_q" => p.gain_q = x,
            "relief_level" => p.relief_level = x,
            "relief_rate" => p.relief_rate = x,
            "relief_width" => p.relief_width = x,
            "kp" => g.kp = x,
            "ki" => g.ki = x,
            "tau_f" => g.tau_f = x,
            "limit" => g.limit = x,
            _ => panic!("unknown key {k}"),
        }
    }
    println!("{p:?}\n{g:?}");
    let net = tanh_pi_rnn(&g).unwrap();
    let model = condenser_surrogate(net.clone(), p).unwrap();
    let phi = parse_formula(&model.spec, &model.variables).unwrap();
    let grid = model.grid().unwrap();
    let x0 = model.init_box.lower().to_vec();
    for w in [3.99, 4.0, 4.01] {
        let sig = PiecewiseLinearSignal::constant(grid, &[w]);
        let out = simulate(&model, &x0, &sig, grid).unwrap();
        let cert = robustness(&phi, &out.trajectory).unwrap();
        let t = std::time::Instant::now();
        let r = local_search(&model, &phi, &x0, &sig, &LocalSearchOptions::default()).unwrap();
        println!(
            "w={w} d={:.5} t*={:.2} p(T)={:.4} | local best={:.3e} ({:.0}%) iters={} stop={:?} {:.2}s",
            cert.robustness,
            cert.critical_time,
            out.trajectory.plant(grid.len() - 1)[0],
            r.result.best_robustness,
            100.0 * (1.0 - r.result.best_robustness / cert.robustness),
            r.iterations,
            r.stop,
            t.elapsed().as_secs_f64()
        );
        if std::env::var("SHOW").is_ok() {
            let out = simulate(&model, &r.result.witness_x0, &r.result.witness_w, grid).unwrap();
            let c = robustness(&phi, &out.trajectory).unwrap();
            let ws: Vec<String> = (0..grid.len()).step_by(100).map(|k| format!("{:+.0}", (r.result.witness_w.node(k)[0] - 4.0) * 100.0)).collect();
            let ps: Vec<String> = (2500..grid.len()).step_by(50).map(|k| format!("{:.3}", out.trajectory.plant(k)[0])).collect();
            println!("   pred {} t*={:.2}\n   w {}\n   p[25..35] {}", c.critical_predicate, c.critical_time, ws.join(""), ps.join(" "));
        }
    }
    if std::env::var("PROBE").is_ok() {
        // Full-flow until t_s, then minimum flow; and the same swing as a
        // ramp across one control-point interval.
        let mut best = (f64::INFINITY, 0.0, false);
        for ramp in [false, true] {
            for i in 0..=80 {
                let ts = 25.0 + 0.125 * i as f64;
                let span = 35.0 / 9.0;
                let vals: Vec<Vec<f64>> = (0..grid.len())
                    .map(|k| {
                        let t = grid.node(k);
                        let f = if ramp { ((t - ts) / span).clamp(0.0, 1.0) } else if t < ts { 0.0 } else { 1.0 };
                        vec![4.01 - 0.02 * f]
                    })
                    .collect();
                let sig = PiecewiseLinearSignal::from_nodes(grid, &vals).unwrap();
                let out = simulate(&model, &x0, &sig, grid).unwrap();
                let d = robustness(&phi, &out.trajectory).unwrap().robustness;
                if d < best.0 {
                    best = (d, ts, ramp);
                }
            }
            println!("probe ramp={ramp}: best d={:.5} at t_s={}", best.0, best.1);
            best = (f64::INFINITY, 0.0, false);
        }
    }
    if runs > 0 {
        let t = std::time::Instant::now();
        let table = run_experiment(&model, &phi, &methods, runs, 7, &template, || NoClock).unwrap();
        for s in &table.summary {
            println!(
                "{:6} falsified {:2}/{} mean best {:+.5} mean sims {:.1}",
                s.method.as_str(),
                s.falsifications,
                s.runs,
                s.mean_min_robustness,
                s.mean_sims
            );
        }
        if std::env::var_os("SHOW").is_some() {
            for r in &table.runs {
                let out = simulate(&model, &r.result.witness_x0, &r.result.witness_w, grid).unwrap();
                let cert = robustness(&phi, &out.trajectory).unwrap();
                println!(
                    "  {:6} run {:2} d={:+.5} gd={} sims={} z*={:.2}",
                    r.method.as_str(),
                    r.run_id,
                    r.result.best_robustness,
                    r.result.gd_invocations,
                    r.result.num_sims,
                    cert.critical_point[0]
                );
            }
        }
        println!("experiment {:.1}s", t.elapsed().as_secs_f64());
    }
    if write {
        let text = format!(
            "# Condenser-surrogate controller: tanh-saturated PI as a continuous RNN\n# kp {:?}, ki {:?}, tau_f {:?}, limit {:?}\n{}",
            g.kp,
            g.ki,
            g.tau_f,
            g.limit,
            write_network(&Network::Rnn(net))
        );
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/condenser_rnn.net"), text).unwrap();
        println!("fixture written");
    }
}
