//! Command-line interface.
//!
//! Exit codes: 0 falsified (or command succeeded), 1 budget exhausted without
//! falsification, 2 configuration or input error, 3 replay mismatch.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gbf_core::benchmarks::BUILTIN_MODELS;
use gbf_core::search::{Method, WInit};
use gbf_core::stl::{parse_formula, robustness, Variables};

use crate::config::RunConfig;
use crate::model::{load_builtin, load_model_file};
use crate::replay::{replay, REPLAY_TOL};

pub const EXIT_FALSIFIED: i32 = 0;
pub const EXIT_NOT_FALSIFIED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gbf", version, about = "Gray-box falsification of neural-network control systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for inputs violating a requirement.
    Falsify(FalsifyArgs),
    /// Robustness and critical point of a trajectory file.
    Monitor(MonitorArgs),
    /// Re-simulate a witness and check its recorded robustness.
    Replay(ReplayArgs),
    /// List the built-in models.
    Models,
}

#[derive(Debug, Args)]
pub struct FalsifyArgs {
    /// Start from a saved run configuration; other flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    /// ur, sa, ur+gd, sa+gd or gd; comma-separated for several.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub max_sims: Option<usize>,
    /// Seconds per run.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// zero, const:<v> or random.
    #[arg(long)]
    pub w_init: Option<WInit>,
    #[arg(long)]
    pub stall_trigger: Option<usize>,
    #[arg(long)]
    pub c_max: Option<usize>,
    #[arg(long)]
    pub control_points: Option<usize>,
    /// Result CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl FalsifyArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.model.is_some() || self.model_file.is_some() {
            cfg.model = self.model.clone();
            cfg.model_file = self.model_file.clone();
        }
        if self.spec.is_some() || self.spec_file.is_some() {
            cfg.spec = self.spec.clone();
            cfg.spec_file = self.spec_file.clone();
        }
        macro_rules! take {
            ($($f:ident => $g:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$g = v.clone();
                }
            )*};
        }
        take!(method => methods, seed => seed, runs => runs, max_sims => max_sims, time_limit => time_limit,
              w_init => w_init, c_max => c_max, control_points => control_points, out => out, jobs => jobs);
        if self.stall_trigger.is_some() {
            cfg.stall_trigger = self.stall_trigger;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Trajectory CSV: `t`, plant columns, then optional `nn*` columns.
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    /// Take variable names and the default requirement from this model.
    #[arg(long, conflicts_with = "model_file")]
    pub model: Option<String>,
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Witness directory written by `falsify`.
    pub witness: PathBuf,
    /// Output directory for the replayed trajectory and plot data
    /// (defaults to the witness directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also simulate on a grid this many times finer.
    #[arg(long)]
    pub refine: Option<usize>,
}

fn cmd_falsify(args: &FalsifyArgs) -> Result<i32> {
    let cfg = args.to_config()?;
    let report = crate::run::falsify(&cfg)?;
    for s in &report.table.summary {
        println!(
            "{}: {}/{} falsified, mean min robustness {}, mean sims {}, mean time {} s",
            s.method, s.falsifications, s.runs, s.mean_min_robustness, s.mean_sims, s.mean_wall_time
        );
    }
    for (r, dir) in report.table.runs.iter().zip(&report.witnesses) {
        if r.result.falsified {
            println!("falsified: {} run {} (d = {}) -> {}", r.method, r.run_id, r.result.best_robustness, dir.display());
        }
    }
    println!("results: {}", cfg.out.display());
    println!("config: {}", report.config_path.display());
    Ok(if report.any_falsified() { EXIT_FALSIFIED } else { EXIT_NOT_FALSIFIED })
}

fn cmd_monitor(args: &MonitorArgs) -> Result<i32> {
    let (traj, names) = crate::io::read_trajectory(&args.trajectory)?;
    let model = match (&args.model, &args.model_file) {
        (Some(m), _) => Some(load_builtin(m)?),
        (None, Some(p)) => Some(load_model_file(p)?),
        (None, None) => None,
    };
    let (vars, default_spec) = match model {
        Some(model) => (model.variables, Some(model.spec)),
        None => {
            let mut v = Variables::new(traj.plant_dim());
            for (i, n) in names.iter().enumerate() {
                v = v.with_alias(n, i);
            }
            (v, None)
        }
    };
    let spec = match (&args.spec, &args.spec_file, default_spec) {
        (Some(s), None, _) => s.clone(),
        (None, Some(p), _) => std::fs::read_to_string(p)
            .with_context(|| format!("reading spec file {}", p.display()))?
            .trim()
            .to_string(),
        (None, None, Some(s)) => s,
        (Some(_), Some(_), _) => anyhow::bail!("give either --spec or --spec-file"),
        (None, None, None) => anyhow::bail!("no requirement given (use --spec, --spec-file or --model)"),
    };
    let phi = parse_formula(&spec, &vars)?;
    let cert = robustness(&phi, &traj)?;
    println!("robustness = {}", cert.robustness);
    println!("critical_time = {}", cert.critical_time);
    println!("critical_index = {}", cert.critical_index);
    println!("critical_predicate = {}", cert.critical_predicate);
    println!("critical_point = {:?}", cert.critical_point);
    Ok(0)
}

fn cmd_replay(args: &ReplayArgs) -> Result<i32> {
    let out = args.out.clone().unwrap_or_else(|| args.witness.clone());
    let r = replay(&args.witness, &out, args.refine)?;
    println!("recorded = {}", r.recorded);
    println!("replayed = {}", r.replayed.robustness);
    println!("gap = {}", r.gap());
    if let Some((factor, d)) = r.refined {
        println!("refined x{factor} = {} (gap {})", d, (d - r.recorded).abs());
    }
    if r.reproduced() {
        println!("reproduced within {REPLAY_TOL}");
        Ok(0)
    } else {
        eprintln!("replay mismatch: gap {} exceeds {REPLAY_TOL}", r.gap());
        Ok(EXIT_MISMATCH)
    }
}

fn cmd_models() -> Result<i32> {
    for name in BUILTIN_MODELS {
        let m = load_builtin(name)?;
        println!("{name}");
        println!("  states: {} plant + {} network, inputs: {}", m.plant_dim(), m.nn_dim(), m.input_dim());
        println!("  U = {:?} .. {:?}", m.input_box.lower(), m.input_box.upper());
        println!("  X0 = {:?} .. {:?}", m.init_box.lower(), m.init_box.upper());
        println!("  horizon {} step {}", m.horizon, m.step);
        println!("  spec: {}", m.spec);
    }
    Ok(0)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Falsify(a) => cmd_falsify(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Models => cmd_models(),
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}
