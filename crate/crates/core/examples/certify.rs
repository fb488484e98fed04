//! Dense uniform-random falsification of the shipped case studies.
//!
//! Draws `n` candidates (10 control points, seed 1) per model and counts how
//! many violate the requirement. Used once to certify that both shipped
//! fixtures are falsifiable at all.
//!
//! cargo run --release --example certify -- [n] [model...]

use gbf_core::benchmarks::builtin_model;
use gbf_core::search::sample_uniform;
use gbf_core::sim::simulate;
use gbf_core::stl::{parse_formula, robustness};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(100_000, |a| a.parse().expect("sample count"));
    let mut models: Vec<String> = args.collect();
    if models.is_empty() {
        models = vec!["fnn-nonlinear".into(), "condenser-surrogate".into()];
    }
    for name in &models {
        let model = builtin_model(name).unwrap();
        let phi = parse_formula(&model.spec, &model.variables).unwrap();
        let grid = model.grid().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = std::time::Instant::now();
        let (mut hits, mut first, mut best) = (0usize, None, f64::INFINITY);
        for k in 0..n {
            let cand = sample_uniform(&mut rng, &model.init_box, &model.input_box, 10);
            let w = cand.to_signal(grid).unwrap();
            let Ok(out) = simulate(&model, &cand.x0, &w, grid) else { continue };
            let d = robustness(&phi, &out.trajectory).unwrap().robustness;
            best = best.min(d);
            if d < 0.0 {
                hits += 1;
                first.get_or_insert(k + 1);
            }
        }
        println!(
            "{name}: {hits}/{n} falsifying samples, first at {first:?}, min robustness {best:+.6e}, {:.1}s",
            t.elapsed().as_secs_f64()
        );
    }
}
