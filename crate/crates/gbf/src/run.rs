//! Experiment execution: seeded runs, optional worker threads, reports.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use gbf_core::search::{derive_seed, run_search, Clock, ExperimentTable, Method, RunRecord};
use gbf_core::sim::ClosedLoopModel;
use gbf_core::stl::{parse_formula, Formula};

use crate::config::RunConfig;
use crate::model::ModelSource;
use crate::witness::{write_witness, RunTag};

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// A model, its origin and the parsed requirement, ready to search.
pub struct Problem {
    pub source: ModelSource,
    pub model: ClosedLoopModel,
    pub spec: String,
    pub phi: Formula,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let source = match (&cfg.model, &cfg.model_file) {
            (Some(n), _) => ModelSource::Builtin(n.clone()),
            (None, Some(p)) => ModelSource::File(p.clone()),
            (None, None) => anyhow::bail!("no model given"),
        };
        let model = source.load()?;
        let spec = cfg.spec_text(&model.spec)?;
        let phi = parse_formula(&spec, &model.variables).with_context(|| format!("parsing requirement '{spec}'"))?;
        Ok(Self {
            source,
            model,
            spec,
            phi,
        })
    }
}

/// Runs every `(method, k)` pair of the experiment, `jobs` at a time. The
/// table lists runs method by method in run order whatever the completion order.
pub fn run_table(problem: &Problem, cfg: &RunConfig) -> Result<ExperimentTable> {
    let tasks: Vec<(Method, usize)> = cfg
        .methods
        .iter()
        .flat_map(|m| (0..cfg.runs).map(move |k| (*m, k)))
        .collect();
    let slots: Vec<Mutex<Option<Result<RunRecord>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(method, k)) = tasks.get(i) else { break };
        let seed = derive_seed(cfg.seed, k as u64);
        let sc = cfg.search_config(method, seed);
        let out = run_search(&problem.model, &problem.phi, &sc, &WallClock::start())
            .with_context(|| format!("{method} run {k}"))
            .map(|o| RunRecord {
                run_id: k,
                method,
                seed,
                result: o.result,
            });
        *slots[i].lock().unwrap() = Some(out);
    };
    if cfg.jobs <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..cfg.jobs.min(tasks.len()) {
                s.spawn(work);
            }
        });
    }
    let records = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every task ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentTable::from_runs(records))
}

pub const RESULT_HEADER: [&str; 9] = [
    "run_id",
    "method",
    "seed",
    "falsified",
    "min_robustness",
    "num_sims",
    "lin_rhs_calls",
    "gd_invocations",
    "wall_time_s",
];

pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "runs",
    "falsifications",
    "avg_min_robustness",
    "avg_time_s",
    "avg_sims",
];

pub fn write_results(path: &Path, table: &ExperimentTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(RESULT_HEADER)?;
    for r in &table.runs {
        let x = &r.result;
        w.write_record([
            r.run_id.to_string(),
            r.method.to_string(),
            r.seed.to_string(),
            u8::from(x.falsified).to_string(),
            x.best_robustness.to_string(),
            x.num_sims.to_string(),
            x.lin_rhs_calls.to_string(),
            x.gd_invocations.to_string(),
            x.wall_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, table: &ExperimentTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SUMMARY_HEADER)?;
    for s in &table.summary {
        w.write_record([
            s.method.to_string(),
            s.runs.to_string(),
            s.falsifications.to_string(),
            s.mean_min_robustness.to_string(),
            s.mean_wall_time.to_string(),
            s.mean_sims.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Witness directory of one run, under `<out dir>/witnesses`.
pub fn witness_dir(cfg: &RunConfig, method: Method, run_id: usize) -> PathBuf {
    cfg.out_dir()
        .join("witnesses")
        .join(format!("{}_run{run_id:03}", method.as_str().replace('+', "-")))
}

pub struct FalsifyReport {
    pub table: ExperimentTable,
    /// One witness directory per run, in table order.
    pub witnesses: Vec<PathBuf>,
    pub config_path: PathBuf,
}

impl FalsifyReport {
    pub fn any_falsified(&self) -> bool {
        self.table.runs.iter().any(|r| r.result.falsified)
    }
}

/// Validates `cfg`, runs the experiment, and writes the result CSV, the
/// summary CSV, `run_config.toml` and one witness per run.
pub fn falsify(cfg: &RunConfig) -> Result<FalsifyReport> {
    cfg.validate()?;
    let cfg = cfg.resolved()?;
    let problem = Problem::from_config(&cfg)?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let config_path = dir.join("run_config.toml");
    std::fs::write(&config_path, cfg.to_toml()?)?;

    let table = run_table(&problem, &cfg)?;
    write_results(&cfg.out, &table)?;
    write_summary(&cfg.summary_path(), &table)?;
    let mut witnesses = Vec::with_capacity(table.runs.len());
    for r in &table.runs {
        let wdir = witness_dir(&cfg, r.method, r.run_id);
        let tag = RunTag {
            method: r.method.to_string(),
            seed: r.seed,
            run_id: r.run_id,
        };
        write_witness(&wdir, &problem.source, &problem.model, &problem.spec, &tag, &r.result)?;
        witnesses.push(wdir);
    }
    Ok(FalsifyReport {
        table,
        witnesses,
        config_path,
    })
}
