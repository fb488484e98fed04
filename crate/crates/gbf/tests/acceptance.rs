//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --release -p gbf --test acceptance`. Witnesses from
//! criteria 4 to 6 are replayed through the `gbf replay` binary in criterion 7.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gbf::model::ModelSource;
use gbf::run::falsify;
use gbf::witness::{write_witness, RunTag};
use gbf::RunConfig;
use gbf_core::adjoint::{local_search, solve_costate, LocalSearchOptions};
use gbf_core::benchmarks::{builtin_model, FnPlant, LinearPlant};
use gbf_core::linearize::{linearize_with_step, LinearizationSchedule};
use gbf_core::search::Method;
use gbf_core::sim::{simulate, ClosedLoopModel};
use gbf_core::stl::{parse_formula, robustness, Variables};
use gbf_core::{BoxSet, Matrix, PiecewiseLinearSignal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Suite {
    failures: usize,
    witnesses: Vec<PathBuf>,
    scratch: tempfile::TempDir,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce(&mut Self) -> Check) {
        let start = Instant::now();
        let out = f(self);
        let took = start.elapsed();
        let out = match out {
            Ok(d) if took > limit => Err(format!("{d}; took {:.1} s, limit {} s", took.as_secs_f64(), limit.as_secs())),
            o => o,
        };
        match out {
            Ok(d) => println!("PASS  {id} {name}: {d} ({:.1} s)", took.as_secs_f64()),
            Err(d) => {
                self.failures += 1;
                println!("FAIL  {id} {name}: {d} ({:.1} s)", took.as_secs_f64());
            }
        }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.scratch.path().join(name)
    }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_fidelity(_: &mut Suite) -> Check {
    let mut worst = (0.0f64, 0);
    for seed in 0..20 {
        let (adj, fd) = common::gradient_check(seed);
        let rel = (adj - fd).abs() / fd.abs();
        if !(rel <= worst.0) {
            worst = (rel, seed);
        }
    }
    ensure(worst.0 <= 1e-2, format!("max relative error {:.2e} (model {}) over 20 models, bound 1e-2", worst.0, worst.1))
}

fn costate_oracle(_: &mut Suite) -> Check {
    let mut worst = 0.0f64;
    for a in [-2.0, -1.0, 0.5] {
        let am = Matrix::from_rows(&[&[a]]).unwrap();
        let bm = Matrix::from_rows(&[&[1.0]]).unwrap();
        let s = LinearizationSchedule::from_samples(vec![0.0, 1.0], vec![am.clone(), am], vec![bm.clone(), bm])
            .map_err(|e| e.to_string())?;
        let path = solve_costate(&s, &[2.0], 0.01).map_err(|e| e.to_string())?;
        for k in 0..path.len() {
            let exact = 2.0 * (a * (1.0 - path.time(k))).exp();
            worst = worst.max((path.lambda(k)[0] - exact).abs());
        }
    }
    ensure(worst <= 1e-8, format!("max |λ − λ(t*)e^(a(t*−t))| = {worst:.2e} for a in {{−2, −1, 0.5}}, bound 1e-8"))
}

fn monitor_oracle(_: &mut Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut mismatches, mut worst_id, mut instances) = (0, 0.0f64, 0);
    for _ in 0..200 {
        // Negating an interval predicate adds a level; redraw those.
        let phi = loop {
            let f = common::random_formula(&mut rng, 3);
            if f.depth() <= 3 {
                break f;
            }
        };
        for _ in 0..5 {
            let traj = common::random_trajectory(&mut rng);
            instances += 1;
            let cert = robustness(&phi, &traj).map_err(|e| e.to_string())?;
            if cert.robustness != common::brute_table(&phi, &traj)[0] {
                mismatches += 1;
            }
            let z = traj.plant(cert.critical_index);
            let dist = z.iter().zip(&cert.critical_point).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            worst_id = worst_id.max((cert.robustness.abs() - dist).abs());
        }
    }
    ensure(
        mismatches == 0 && worst_id <= 1e-12,
        format!(
            "{mismatches} of {instances} monitor values differ from the brute-force table; \
             max certificate gap {worst_id:.1e}, bound 1e-12"
        ),
    )
}

fn record(suite: &mut Suite, name: &str, model: &str, result: &gbf_core::search::FalsificationResult) -> Check {
    let m = builtin_model(model).map_err(|e| e.to_string())?;
    let dir = suite.dir(name);
    let tag = RunTag {
        method: "gd".into(),
        seed: 0,
        run_id: 0,
    };
    let cert = write_witness(&dir, &ModelSource::Builtin(model.into()), &m, &m.spec, &tag, result)
        .map_err(|e| format!("{e:#}"))?;
    if cert.robustness != result.best_robustness {
        return Err(format!("witness re-simulates to {} instead of {}", cert.robustness, result.best_robustness));
    }
    suite.witnesses.push(dir);
    Ok(String::new())
}

fn fnn_case(suite: &mut Suite) -> Check {
    let model = builtin_model("fnn-nonlinear").map_err(|e| e.to_string())?;
    let phi = parse_formula(&model.spec, &model.variables).map_err(|e| e.to_string())?;
    let w = PiecewiseLinearSignal::constant(model.grid().unwrap(), &[0.0]);
    let opts = LocalSearchOptions::default();
    let r = local_search(&model, &phi, model.init_box.lower(), &w, &opts).map_err(|e| e.to_string())?;
    record(suite, "fnn", "fnn-nonlinear", &r.result)?;
    ensure(
        r.result.best_robustness < 0.0 && r.iterations <= 50,
        format!(
            "robustness {:.4} -> {:.3e} after {} iterations ({:?}), needs < 0 within 50",
            r.initial_robustness, r.result.best_robustness, r.iterations, r.stop
        ),
    )
}

fn condenser_reduction(suite: &mut Suite) -> Check {
    let model = builtin_model("condenser-surrogate").map_err(|e| e.to_string())?;
    let phi = parse_formula(&model.spec, &model.variables).map_err(|e| e.to_string())?;
    let grid = model.grid().unwrap();
    let (lo, hi) = (model.input_box.lower()[0], model.input_box.upper()[0]);
    let mut lines = Vec::new();
    let (mut all_reduced, mut any_safe) = (true, false);
    for (name, w) in [("lower", lo), ("mid", 0.5 * (lo + hi)), ("upper", hi)] {
        let sig = PiecewiseLinearSignal::constant(grid, &[w]);
        let r = local_search(&model, &phi, model.init_box.lower(), &sig, &LocalSearchOptions::default())
            .map_err(|e| e.to_string())?;
        record(suite, &format!("condenser_{name}"), "condenser-surrogate", &r.result)?;
        let reduction = 1.0 - r.result.best_robustness / r.initial_robustness;
        all_reduced &= reduction >= 0.5;
        any_safe |= r.result.best_robustness >= 0.0;
        lines.push(format!(
            "{name} {:.5} -> {:.3e} ({:.0}%)",
            r.initial_robustness,
            r.result.best_robustness,
            100.0 * reduction
        ));
    }
    ensure(
        all_reduced && any_safe,
        format!("{}; needs >= 50% each and one start not falsified", lines.join(", ")),
    )
}

fn table_protocol(suite: &mut Suite) -> Check {
    let out = suite.dir("table").join("results.csv");
    let cfg = RunConfig {
        model: Some("condenser-surrogate".into()),
        methods: vec![Method::Ur, Method::Sa, Method::UrGd, Method::SaGd],
        seed: 7,
        runs: 20,
        max_sims: 600,
        time_limit: 60.0,
        jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        out,
        ..RunConfig::default()
    };
    let report = falsify(&cfg).map_err(|e| format!("{e:#}"))?;
    suite.witnesses.extend(report.witnesses.iter().cloned());
    let s = |m| report.table.method(m).expect("method ran");
    let (ur, sa, urgd, sagd) = (s(Method::Ur), s(Method::Sa), s(Method::UrGd), s(Method::SaGd));
    let gd_ok = urgd.falsifications >= 18 && sagd.falsifications >= 18;
    let plain_ok = ur.falsifications <= 4 && sa.falsifications <= 4;
    let gap_ok = urgd.mean_min_robustness.max(sagd.mean_min_robustness)
        < ur.mean_min_robustness.min(sa.mean_min_robustness);
    let rows: Vec<String> = report
        .table
        .summary
        .iter()
        .map(|m| format!("{} {}/{} mean {:+.5}", m.method, m.falsifications, m.runs, m.mean_min_robustness))
        .collect();
    ensure(gd_ok && plain_ok && gap_ok, format!("{}; needs GD >= 18/20, UR/SA <= 4/20, GD means below", rows.join(", ")))
}

fn replay_witnesses(suite: &mut Suite) -> Check {
    if suite.witnesses.is_empty() {
        return Err("no witnesses were produced".into());
    }
    let mut bad = Vec::new();
    for (i, dir) in suite.witnesses.iter().enumerate() {
        let out = Command::new(env!("CARGO_BIN_EXE_gbf"))
            .arg("replay")
            .arg(dir)
            .arg("--out")
            .arg(suite.scratch.path().join("replays").join(i.to_string()))
            .env_remove("GBF_FIXTURES")
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.code() != Some(0) {
            bad.push(format!("{} (exit {:?})", short(dir), out.status.code()));
        }
    }
    ensure(
        bad.is_empty(),
        format!("{} of {} witnesses reproduce within 1e-9 {}", suite.witnesses.len() - bad.len(), suite.witnesses.len(), bad.join(" ")),
    )
}

fn short(p: &Path) -> String {
    let n: Vec<_> = p.components().rev().take(2).collect();
    n.iter().rev().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn model(plant: impl gbf_core::sim::Plant + 'static, n: usize, horizon: f64, step: f64) -> ClosedLoopModel {
    ClosedLoopModel {
        name: "check".into(),
        plant: Arc::new(plant),
        controller: None,
        input_box: BoxSet::new(vec![-5.0], vec![5.0]).unwrap(),
        init_box: BoxSet::new(vec![-5.0; n], vec![5.0; n]).unwrap(),
        horizon,
        step,
        spec: String::new(),
        variables: Variables::new(n),
        constants: Vec::new(),
        jacobian: None,
    }
}

fn orders(_: &mut Suite) -> Check {
    let decay_error = |step: f64| {
        let m = model(
            LinearPlant::new(Matrix::from_rows(&[&[-1.0]]).unwrap(), Matrix::from_rows(&[&[0.0]]).unwrap()).unwrap(),
            1,
            1.0,
            step,
        );
        let grid = m.grid().unwrap();
        let tr = simulate(&m, &[1.0], &PiecewiseLinearSignal::constant(grid, &[0.0]), grid).unwrap().trajectory;
        (tr.plant(grid.len() - 1)[0] - (-1.0f64).exp()).abs()
    };
    let rk = decay_error(0.1) / decay_error(0.05);

    let curved = model(
        FnPlant::new(3, 1, |x, w, out| {
            out[0] = x[0].sin() * x[1] + w[0];
            out[1] = (0.3 * x[0]).exp() - x[1] * x[1];
            out[2] = w[0].tanh() * x[0];
        }),
        3,
        1.0,
        0.01,
    );
    let (x, w): ([f64; 3], f64) = ([0.7, -1.1, 0.4], 0.9);
    let a = Matrix::from_rows(&[
        &[x[0].cos() * x[1], x[0].sin(), 0.0],
        &[0.3 * (0.3 * x[0]).exp(), -2.0 * x[1], 0.0],
        &[w.tanh(), 0.0, 0.0],
    ])
    .unwrap();
    let b = Matrix::from_rows(&[&[1.0], &[0.0], &[x[0] / w.cosh().powi(2)]]).unwrap();
    let err = |eps: f64| {
        let l = linearize_with_step(&curved, &x, &[w], eps).unwrap();
        l.a.max_abs_diff(&a).max(l.b.max_abs_diff(&b))
    };
    let e = [err(4e-2), err(2e-2), err(1e-2)];
    let lin = [e[0] / e[1], e[1] / e[2]];
    ensure(
        (12.0..=20.0).contains(&rk) && lin.iter().all(|r| (3.5..=4.5).contains(r)),
        format!(
            "RK4 error ratio {rk:.2} (window [12, 20]); linearizer error ratios {:.3}, {:.3} per halving of ε (window [3.5, 4.5])",
            lin[0], lin[1]
        ),
    )
}

fn main() {
    // Under `cargo test` the harness may pass filter arguments; a filter that
    // names no criterion skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut suite = Suite {
        failures: 0,
        witnesses: Vec::new(),
        scratch: tempfile::tempdir().expect("scratch directory"),
    };
    let min = |m: u64| Duration::from_secs(60 * m);
    suite.run(1, "gradient fidelity", min(1), gradient_fidelity);
    suite.run(2, "co-state oracle", min(1), costate_oracle);
    suite.run(3, "monitor oracle equivalence", min(1), monitor_oracle);
    suite.run(4, "FNN case falsified by local search", min(2), fnn_case);
    suite.run(5, "condenser local-search reduction", min(3), condenser_reduction);
    suite.run(6, "multi-run protocol", min(30), table_protocol);
    suite.run(7, "witness replay determinism", min(5), replay_witnesses);
    suite.run(8, "RK4 order and linearizer convergence", min(1), orders);
    println!("{} of 8 criteria passed", 8 - suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
