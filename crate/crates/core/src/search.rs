//! Global falsification layer: uniform random sampling, simulated annealing,
//! and their combination with the adjoint local search.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adjoint::{local_search_budgeted, Budget, LocalSearchOptions};
use crate::error::{Error, Result};
use crate::signals::{in_box, BoxSet, PiecewiseLinearSignal, TimeGrid};
use crate::sim::{simulate, ClosedLoopModel};
use crate::stl::{robustness, Formula};

/// Elapsed-time source, in seconds since the search started.
pub trait Clock {
    fn elapsed(&self) -> f64;
}

/// A clock that never advances; time limits are then never hit.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ur,
    Sa,
    UrGd,
    SaGd,
    /// Local search only, from the configured initial input.
    Gd,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ur, Method::Sa, Method::UrGd, Method::SaGd, Method::Gd];

    pub fn uses_gd(self) -> bool {
        matches!(self, Method::UrGd | Method::SaGd | Method::Gd)
    }

    fn annealing(self) -> bool {
        matches!(self, Method::Sa | Method::SaGd)
    }

    pub fn default_stall_trigger(self) -> usize {
        match self {
            Method::SaGd => 30,
            _ => 50,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ur => "ur",
            Method::Sa => "sa",
            Method::UrGd => "ur+gd",
            Method::SaGd => "sa+gd",
            Method::Gd => "gd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(alloc::format!("unknown method '{s}'")))
    }
}

/// Starting input for pure local search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WInit {
    Zero,
    Const(f64),
    /// Control points drawn uniformly from `U` with the run's generator.
    Random,
}

impl fmt::Display for WInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WInit::Zero => f.write_str("zero"),
            WInit::Const(v) => write!(f, "const:{v:?}"),
            WInit::Random => f.write_str("random"),
        }
    }
}

impl FromStr for WInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => Ok(WInit::Zero),
            "random" => Ok(WInit::Random),
            _ => s
                .strip_prefix("const:")
                .and_then(|v| v.trim().parse().ok())
                .map(WInit::Const)
                .ok_or_else(|| Error::Config(alloc::format!("bad initial input '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaParams {
    /// Initial temperature as a fraction of the first evaluated robustness.
    pub init_temp_factor: f64,
    pub cooling: f64,
    /// Proposal standard deviation as a fraction of each box side.
    pub proposal_scale: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            init_temp_factor: 0.1,
            cooling: 0.95,
            proposal_scale: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub method: Method,
    pub seed: u64,
    pub max_sims: usize,
    /// Seconds, measured by the caller's clock.
    pub time_limit: f64,
    /// `None` selects the method default.
    pub stall_trigger: Option<usize>,
    pub c_max: usize,
    pub control_points: usize,
    pub sa: SaParams,
    pub local: LocalSearchOptions,
    pub w_init: WInit,
}

impl SearchConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            seed,
            max_sims: 600,
            time_limit: 60.0,
            stall_trigger: None,
            c_max: 5,
            control_points: 10,
            sa: SaParams::default(),
            local: LocalSearchOptions::default(),
            w_init: WInit::Zero,
        }
    }

    pub fn stall_trigger(&self) -> usize {
        self.stall_trigger
            .unwrap_or_else(|| self.method.default_stall_trigger())
    }
}

/// Initial condition plus `P` control points of the input, `P × m` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x0: Vec<f64>,
    pub w_params: Vec<f64>,
    pub input_dim: usize,
    pub robustness: Option<f64>,
}

impl Candidate {
    pub fn control_points(&self) -> usize {
        self.w_params.len() / self.input_dim.max(1)
    }

    pub fn control_point(&self, j: usize) -> &[f64] {
        &self.w_params[j * self.input_dim..(j + 1) * self.input_dim]
    }

    /// Linear interpolation of the control points, spread evenly over
    /// `[0, T]`, sampled at every node of `grid`.
    pub fn to_signal(&self, grid: TimeGrid) -> Result<PiecewiseLinearSignal> {
        let p = self.control_points();
        let m = self.input_dim;
        if p == 0 {
            return Err(Error::Config("candidate has no control points".into()));
        }
        if p == 1 {
            return Ok(PiecewiseLinearSignal::constant(grid, self.control_point(0)));
        }
        let mut values = Vec::with_capacity(grid.len() * m);
        let span = (p - 1) as f64;
        for k in 0..grid.len() {
            let s = grid.node(k) / grid.horizon() * span;
            let j = (libm::floor(s) as usize).min(p - 2);
            let frac = s - j as f64;
            let (a, b) = (self.control_point(j), self.control_point(j + 1));
            for i in 0..m {
                values.push(if frac == 0.0 {
                    a[i]
                } else if frac == 1.0 {
                    b[i]
                } else {
                    (1.0 - frac) * a[i] + frac * b[i]
                });
            }
        }
        PiecewiseLinearSignal::new(grid, m, values)
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        let u: f64 = rng.random();
        (lo + u * (hi - lo)).min(hi)
    }
}

/// Uniform draw of `x0 ∈ X0` followed by `P` control points in `U`, in that order.
pub fn sample_uniform(
    rng: &mut ChaCha8Rng,
    x0_box: &BoxSet,
    u_box: &BoxSet,
    p: usize,
) -> Candidate {
    let x0 = (0..x0_box.dim())
        .map(|i| uniform_in(rng, x0_box.lower()[i], x0_box.upper()[i]))
        .collect();
    let mut w_params = Vec::with_capacity(p * u_box.dim());
    for _ in 0..p {
        for i in 0..u_box.dim() {
            w_params.push(uniform_in(rng, u_box.lower()[i], u_box.upper()[i]));
        }
    }
    Candidate {
        x0,
        w_params,
        input_dim: u_box.dim(),
        robustness: None,
    }
}

fn perturb(rng: &mut ChaCha8Rng, v: &[f64], bx: &BoxSet, scale: f64) -> Result<Vec<f64>> {
    let moved: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z: f64 = StandardNormal.sample(rng);
            x + z * scale * bx.width(i)
        })
        .collect();
    in_box(&moved, bx)
}

/// Gaussian proposal around `current`, saturated into the boxes.
pub fn sa_propose(
    rng: &mut ChaCha8Rng,
    current: &Candidate,
    x0_box: &BoxSet,
    u_box: &BoxSet,
    scale: f64,
) -> Result<Candidate> {
    let x0 = perturb(rng, &current.x0, x0_box, scale)?;
    let m = u_box.dim();
    let mut w_params = Vec::with_capacity(current.w_params.len());
    for j in 0..current.control_points() {
        w_params.extend(perturb(rng, &current.w_params[j * m..(j + 1) * m], u_box, scale)?);
    }
    Ok(Candidate {
        x0,
        w_params,
        input_dim: m,
        robustness: None,
    })
}

/// Metropolis acceptance probability for a robustness change `delta`.
pub fn acceptance_probability(delta: f64, temp: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else if temp <= 0.0 {
        0.0
    } else {
        libm::exp(-delta / temp)
    }
}

/// Annealing chain: current point and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct SaState {
    pub current: Candidate,
    pub temp: f64,
}

impl SaState {
    /// Starts a chain at an evaluated candidate.
    pub fn new(current: Candidate, params: &SaParams) -> Self {
        let d = current.robustness.unwrap_or(f64::INFINITY);
        let temp = params.init_temp_factor * libm::fabs(d);
        Self {
            current,
            temp: if temp.is_finite() && temp > 0.0 { temp } else { 1e-3 },
        }
    }

    /// Accepts or rejects an evaluated proposal; the acceptance draw always
    /// consumes one number from `rng`. Returns whether it was accepted.
    pub fn step(&mut self, rng: &mut ChaCha8Rng, proposal: Candidate, params: &SaParams) -> bool {
        let u: f64 = rng.random();
        let accept = match (proposal.robustness, self.current.robustness) {
            (Some(new), Some(old)) => u < acceptance_probability(new - old, self.temp),
            (Some(_), None) => true,
            (None, _) => false,
        };
        if accept {
            self.current = proposal;
            self.temp *= params.cooling;
        }
        accept
    }
}

/// One annealing move: propose from the chain's current point, evaluate with
/// `eval`, then accept or reject.
pub fn sa_step(
    rng: &mut ChaCha8Rng,
    state: &mut SaState,
    cfg: &SearchConfig,
    x0_box: &BoxSet,
    u_box: &BoxSet,
    eval: impl FnOnce(&Candidate) -> Option<f64>,
) -> Result<Candidate> {
    let mut proposal = sa_propose(rng, &state.current, x0_box, u_box, cfg.sa.proposal_scale)?;
    proposal.robustness = eval(&proposal);
    state.step(rng, proposal.clone(), &cfg.sa);
    Ok(proposal)
}

/// Outcome of one falsification run.
#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationResult {
    pub falsified: bool,
    pub best_robustness: f64,
    pub witness_x0: Vec<f64>,
    /// Input on the full simulation grid.
    pub witness_w: PiecewiseLinearSignal,
    pub num_sims: usize,
    /// Right-hand-side calls spent in linearizations, reported apart from `num_sims`.
    pub lin_rhs_calls: usize,
    pub gd_invocations: usize,
    pub wall_time: f64,
}

/// Who produced a logged evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Global,
    Local,
}

/// A search result with its per-simulation robustness log; failed
/// evaluations are logged as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub result: FalsificationResult,
    pub log: Vec<(Source, Option<f64>)>,
    pub failures: usize,
}

struct Best {
    x0: Vec<f64>,
    w: PiecewiseLinearSignal,
    d: f64,
}

fn evaluate(
    model: &ClosedLoopModel,
    phi: &Formula,
    x0: &[f64],
    w: &PiecewiseLinearSignal,
    grid: TimeGrid,
) -> Result<f64> {
    let out = simulate(model, x0, w, grid)?;
    Ok(robustness(phi, &out.trajectory)?.robustness)
}

fn initial_input(model: &ClosedLoopModel, rng: &mut ChaCha8Rng, cfg: &SearchConfig) -> Result<Candidate> {
    let m = model.input_dim();
    let p = cfg.control_points.max(1);
    let mut c = match cfg.w_init {
        WInit::Random => sample_uniform(rng, &model.init_box, &model.input_box, p),
        WInit::Zero | WInit::Const(_) => {
            let v = if let WInit::Const(v) = cfg.w_init { v } else { 0.0 };
            let point = in_box(&vec![v; m], &model.input_box)?;
            Candidate {
                x0: model.init_box.midpoint(),
                w_params: point.repeat(p),
                input_dim: m,
                robustness: None,
            }
        }
    };
    c.x0 = in_box(&c.x0, &model.init_box)?;
    Ok(c)
}

/// Runs one falsification search. Every simulation, global or local, counts
/// against `cfg.max_sims`.
pub fn run_search(
    model: &ClosedLoopModel,
    phi: &Formula,
    cfg: &SearchConfig,
    clock: &dyn Clock,
) -> Result<SearchOutcome> {
    model.validate()?;
    let grid = model.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();

    if cfg.method == Method::Gd {
        let start = initial_input(model, &mut rng, cfg)?;
        let w = start.to_signal(grid)?;
        let report = local_search_budgeted(
            model,
            phi,
            &start.x0,
            &w,
            &cfg.local,
            Budget {
                max_sims: cfg.max_sims,
                deadline: cfg.time_limit,
                clock,
            },
        )?;
        log.extend(report.history.iter().map(|d| (Source::Local, Some(*d))));
        let mut result = report.result;
        result.wall_time = clock.elapsed();
        return Ok(SearchOutcome {
            result,
            log,
            failures: 0,
        });
    }

    let p = cfg.control_points.max(1);
    let trigger = cfg.stall_trigger();
    let mut best: Option<Best> = None;
    let mut sa: Option<SaState> = None;
    let (mut sims, mut lin, mut gd, mut stall, mut failures) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut last_err: Option<Error> = None;

    while sims < cfg.max_sims && clock.elapsed() < cfg.time_limit {
        let mut cand = match &sa {
            Some(state) if cfg.method.annealing() => sa_propose(
                &mut rng,
                &state.current,
                &model.init_box,
                &model.input_box,
                cfg.sa.proposal_scale,
            )?,
            _ => sample_uniform(&mut rng, &model.init_box, &model.input_box, p),
        };
        let w = cand.to_signal(grid)?;
        sims += 1;
        match evaluate(model, phi, &cand.x0, &w, grid) {
            Err(e) => {
                failures += 1;
                stall += 1;
                last_err = Some(e);
                log.push((Source::Global, None));
            }
            Ok(d) => {
                cand.robustness = Some(d);
                log.push((Source::Global, Some(d)));
                if best.as_ref().map_or(true, |b| d < b.d) {
                    best = Some(Best {
                        x0: cand.x0.clone(),
                        w,
                        d,
                    });
                    stall = 0;
                } else {
                    stall += 1;
                }
                if d < 0.0 {
                    break;
                }
                if cfg.method.annealing() {
                    match sa.as_mut() {
                        None => sa = Some(SaState::new(cand, &cfg.sa)),
                        Some(state) => {
                            state.step(&mut rng, cand, &cfg.sa);
                        }
                    }
                }
            }
        }

        if cfg.method.uses_gd() && stall >= trigger && gd < cfg.c_max && sims < cfg.max_sims {
            if let Some(b) = best.as_ref() {
                stall = 0;
                gd += 1;
                let budget = Budget {
                    max_sims: cfg.max_sims - sims,
                    deadline: cfg.time_limit,
                    clock,
                };
                match local_search_budgeted(model, phi, &b.x0, &b.w, &cfg.local, budget) {
                    Ok(report) => {
                        sims += report.result.num_sims;
                        lin += report.result.lin_rhs_calls;
                        log.extend(report.history.iter().map(|d| (Source::Local, Some(*d))));
                        let r = report.result;
                        if r.best_robustness < b.d {
                            best = Some(Best {
                                x0: r.witness_x0,
                                w: r.witness_w,
                                d: r.best_robustness,
                            });
                        }
                        if r.falsified {
                            break;
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        last_err = Some(e);
                    }
                }
            }
        }
    }

    let b = match best {
        Some(b) => b,
        None => {
            return Err(Error::AllCandidatesFailed(Box::new(last_err.unwrap_or(
                Error::Config("search budget allowed no simulation".into()),
            ))))
        }
    };
    Ok(SearchOutcome {
        result: FalsificationResult {
            falsified: b.d < 0.0,
            best_robustness: b.d,
            witness_x0: b.x0,
            witness_w: b.w,
            num_sims: sims,
            lin_rhs_calls: lin,
            gd_invocations: gd,
            wall_time: clock.elapsed(),
        },
        log,
        failures,
    })
}

/// Seed of run `k` in an experiment, shared by every method.
pub fn derive_seed(base_seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer over the combined state
    let mut z = base_seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub method: Method,
    pub seed: u64,
    pub result: FalsificationResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub falsifications: usize,
    pub mean_min_robustness: f64,
    pub mean_wall_time: f64,
    pub mean_sims: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<MethodSummary>,
}

impl ExperimentTable {
    /// Aggregates run records, one summary row per method in first-seen order.
    pub fn from_runs(runs: Vec<RunRecord>) -> Self {
        let mut methods: Vec<Method> = Vec::new();
        for r in &runs {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let summary = methods
            .into_iter()
            .map(|method| {
                let rs: Vec<&FalsificationResult> = runs
                    .iter()
                    .filter(|r| r.method == method)
                    .map(|r| &r.result)
                    .collect();
                let n = rs.len() as f64;
                MethodSummary {
                    method,
                    runs: rs.len(),
                    falsifications: rs.iter().filter(|r| r.falsified).count(),
                    mean_min_robustness: rs.iter().map(|r| r.best_robustness).sum::<f64>() / n,
                    mean_wall_time: rs.iter().map(|r| r.wall_time).sum::<f64>() / n,
                    mean_sims: rs.iter().map(|r| r.num_sims as f64).sum::<f64>() / n,
                }
            })
            .collect();
        Self { runs, summary }
    }

    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == m)
    }
}

/// Runs `runs` seeded searches per method, serially, run `k` of every method
/// using `derive_seed(base_seed, k)`. `clock` supplies a fresh clock per run.
pub fn run_experiment<C: Clock>(
    model: &ClosedLoopModel,
    phi: &Formula,
    methods: &[Method],
    runs: usize,
    base_seed: u64,
    template: &SearchConfig,
    mut clock: impl FnMut() -> C,
) -> Result<ExperimentTable> {
    if runs == 0 {
        return Err(Error::Config("an experiment needs at least one run".into()));
    }
    let mut records = Vec::with_capacity(runs * methods.len());
    for &method in methods {
        for k in 0..runs {
            let cfg = SearchConfig {
                method,
                seed: derive_seed(base_seed, k as u64),
                ..template.clone()
            };
            let c = clock();
            let out = run_search(model, phi, &cfg, &c)?;
            records.push(RunRecord {
                run_id: k,
                method,
                seed: cfg.seed,
                result: out.result,
            });
        }
    }
    Ok(ExperimentTable::from_runs(records))
}
