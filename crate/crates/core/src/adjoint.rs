//! Backward co-state integration, descent directions, and the adjoint local
//! search over initial conditions and full-grid input signals.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linearize::{build_schedule, default_num_samples, LinearizationSchedule};
use crate::search::{Clock, FalsificationResult, NoClock};
use crate::signals::{in_box, PiecewiseLinearSignal, Trajectory};
use crate::sim::{simulate, ClosedLoopModel};
use crate::stl::{robustness, Formula, RobustnessCertificate};

/// Co-state `λ` at the simulation nodes of `[0, t*]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostatePath {
    step: f64,
    dim: usize,
    lambdas: Vec<f64>,
}

impl CostatePath {
    pub fn len(&self) -> usize {
        self.lambdas.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            self.step * (self.len() - 1) as f64
        } else {
            k as f64 * self.step
        }
    }

    pub fn lambda(&self, k: usize) -> &[f64] {
        &self.lambdas[k * self.dim..(k + 1) * self.dim]
    }

    pub fn initial(&self) -> &[f64] {
        self.lambda(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.lambda(self.len() - 1)
    }
}

/// Integrates `λ' = −A(t)ᵀ λ` backward from `λ(t*) = terminal` with RK4,
/// using the simulation step `step` (t* must be a multiple of it).
pub fn solve_costate(
    schedule: &LinearizationSchedule,
    terminal: &[f64],
    step: f64,
) -> Result<CostatePath> {
    let n = schedule.state_dim();
    check_dim("co-state terminal", n, terminal.len())?;
    let t_star = schedule.span();
    let intervals = libm::round(t_star / step) as usize;
    if libm::fabs(intervals as f64 * step - t_star) > 1e-9 * step.max(t_star) {
        return Err(Error::Config(alloc::format!(
            "t* = {t_star} is not a multiple of the step {step}"
        )));
    }
    let len = intervals + 1;
    let mut lambdas = vec![0.0; len * n];
    lambdas[intervals * n..].copy_from_slice(terminal);
    let node = |k: usize| if k == intervals { t_star } else { k as f64 * step };

    let mut lam = terminal.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for k in (0..intervals).rev() {
        let (t1, t0) = (node(k + 1), node(k));
        let h = t1 - t0;
        let tm = t1 - 0.5 * h;
        // dλ/ds = A(t)ᵀ λ with s = t* − t.
        schedule.a_tr_mul(t1, &lam, &mut k1)?;
        for i in 0..n {
            tmp[i] = lam[i] + 0.5 * h * k1[i];
        }
        schedule.a_tr_mul(tm, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = lam[i] + 0.5 * h * k2[i];
        }
        schedule.a_tr_mul(tm, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = lam[i] + h * k3[i];
        }
        schedule.a_tr_mul(t0, &tmp, &mut k4)?;
        for i in 0..n {
            lam[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::CostateDiverged(t0));
        }
        lambdas[k * n..(k + 1) * n].copy_from_slice(&lam);
    }
    Ok(CostatePath {
        step,
        dim: n,
        lambdas,
    })
}

/// `δx(0) = −λ(0)` and `δw(t) = −B(t)ᵀ λ(t)` at the co-state nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentDirection {
    pub dx0: Vec<f64>,
    /// Row `k` is `δw(t_k)`; rows cover the nodes of `[0, t*]`.
    dw: Vec<f64>,
    input_dim: usize,
    step: f64,
}

impl DescentDirection {
    pub fn len(&self) -> usize {
        self.dw.len() / self.input_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    pub fn dw(&self, k: usize) -> &[f64] {
        &self.dw[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Trapezoidal `∫ g(t) dt` over the direction's nodes.
    fn trapz(&self, mut g: impl FnMut(usize) -> f64) -> f64 {
        let len = self.len();
        if len < 2 {
            return 0.0;
        }
        let inner: f64 = (1..len - 1).map(&mut g).sum();
        self.step * (0.5 * g(0) + inner + 0.5 * g(len - 1))
    }

    /// First-order change of `J` along `(δx_p(0), δw)` predicted by the co-state:
    /// `λ(0)ᵀ δx(0) + ∫ λᵀ B δw dt`. `delta_w` holds one row per node of `[0, t*]`.
    pub fn directional_derivative(&self, delta_x0: &[f64], delta_w: &[f64]) -> f64 {
        let m = self.input_dim;
        let initial: f64 = -self.dx0.iter().zip(delta_x0).map(|(a, b)| a * b).sum::<f64>();
        initial
            - self.trapz(|k| {
                self.dw(k)
                    .iter()
                    .zip(&delta_w[k * m..(k + 1) * m])
                    .map(|(a, b)| a * b)
                    .sum()
            })
    }
}

/// Forms the descent directions from a co-state path and its schedule.
pub fn descent_directions(
    path: &CostatePath,
    schedule: &LinearizationSchedule,
) -> Result<DescentDirection> {
    check_dim("co-state dimension", schedule.state_dim(), path.dim())?;
    if libm::fabs(path.time(path.len() - 1) - schedule.span()) > 1e-9 * path.step().max(1.0) {
        return Err(Error::Config("co-state path and schedule spans differ".into()));
    }
    let m = schedule.input_dim();
    let mut dw = vec![0.0; path.len() * m];
    for k in 0..path.len() {
        let t = path.time(k).min(schedule.span());
        let row = &mut dw[k * m..(k + 1) * m];
        schedule.b_tr_mul(t, path.lambda(k), row)?;
        row.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(DescentDirection {
        dx0: path.initial().iter().map(|v| -v).collect(),
        dw,
        input_dim: m,
        step: path.step(),
    })
}

/// `−δJ̄` along the chosen directions: `‖λ(0)‖² + ∫ ‖B(t)ᵀλ(t)‖² dt`.
pub fn predicted_decrease(dir: &DescentDirection, path: &CostatePath) -> Result<f64> {
    check_dim("direction length", path.len(), dir.len())?;
    let l0: f64 = path.initial().iter().map(|v| v * v).sum();
    Ok(l0 + dir.trapz(|k| dir.dw(k).iter().map(|v| v * v).sum()))
}

/// Tunables of the adjoint local search.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchOptions {
    /// Initial step. `None` sizes the first update so that its largest
    /// coordinate change is a tenth of that coordinate's box width.
    pub h0: Option<f64>,
    /// Step growth/shrink factor, `> 1`.
    pub c: f64,
    /// Maximum number of simulate-and-monitor passes.
    pub max_iters: usize,
    pub tol_d: f64,
    pub tol_x: f64,
    /// Linearization samples; `None` means `min(100, nodes in [0, t*])`.
    pub num_lin_samples: Option<usize>,
}

impl Default for LocalSearchOptions {
    fn default() -> Self {
        Self {
            h0: None,
            c: 2.0,
            max_iters: 50,
            tol_d: 1e-6,
            tol_x: 1e-8,
            num_lin_samples: None,
        }
    }
}

/// Why a local search returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Falsified,
    MaxIterations,
    RobustnessStalled,
    StepTooSmall,
    Budget,
}

/// Local search outcome plus its per-simulation robustness history.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchReport {
    pub result: FalsificationResult,
    pub initial_robustness: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub stop: StopReason,
}

/// Limits imposed by an enclosing global search.
#[derive(Clone, Copy)]
pub(crate) struct Budget<'a> {
    pub max_sims: usize,
    pub deadline: f64,
    pub clock: &'a dyn Clock,
}

struct Incumbent {
    x0: Vec<f64>,
    w: PiecewiseLinearSignal,
    cert: RobustnessCertificate,
}

fn descent_at(
    model: &ClosedLoopModel,
    traj: &Trajectory,
    w: &PiecewiseLinearSignal,
    cert: &RobustnessCertificate,
    opts: &LocalSearchOptions,
) -> Result<(DescentDirection, usize)> {
    let samples = opts
        .num_lin_samples
        .unwrap_or_else(|| default_num_samples(cert.critical_index + 1));
    let schedule = build_schedule(model, traj, w, cert.critical_time, samples)?;
    let x_star = traj.state(cert.critical_index);
    let terminal: Vec<f64> = x_star
        .iter()
        .zip(&cert.augmented_target)
        .map(|(x, r)| x - r)
        .collect();
    let path = solve_costate(&schedule, &terminal, traj.grid().step())?;
    Ok((descent_directions(&path, &schedule)?, schedule.rhs_evals))
}

/// Step making the largest update a tenth of its coordinate's box width;
/// `None` when the direction cannot move any free coordinate.
fn first_step(model: &ClosedLoopModel, dir: &DescentDirection) -> Option<f64> {
    let mut ratio = 0.0f64;
    for (i, d) in dir.dx0.iter().take(model.plant_dim()).enumerate() {
        let width = model.init_box.width(i);
        if width > 0.0 {
            ratio = ratio.max(libm::fabs(*d) / width);
        }
    }
    for k in 0..dir.len() {
        for (i, d) in dir.dw(k).iter().enumerate() {
            let width = model.input_box.width(i);
            if width > 0.0 {
                ratio = ratio.max(libm::fabs(*d) / width);
            }
        }
    }
    (ratio > 0.0 && ratio.is_finite()).then(|| 0.1 / ratio)
}

/// Adjoint local search from `(x0_init, w_init)`.
///
/// Each pass simulates, monitors, and either accepts the candidate (new best,
/// step grows by `c`, fresh directions from its co-state) or rejects it (step
/// shrinks by `c`). The next candidate is always the best point moved along
/// the stored directions and saturated into `X0` and `U`; inputs after `t*`
/// are left untouched.
pub fn local_search(
    model: &ClosedLoopModel,
    phi: &Formula,
    x0_init: &[f64],
    w_init: &PiecewiseLinearSignal,
    opts: &LocalSearchOptions,
) -> Result<LocalSearchReport> {
    let clock = NoClock;
    local_search_budgeted(
        model,
        phi,
        x0_init,
        w_init,
        opts,
        Budget {
            max_sims: usize::MAX,
            deadline: f64::INFINITY,
            clock: &clock,
        },
    )
}

pub(crate) fn local_search_budgeted(
    model: &ClosedLoopModel,
    phi: &Formula,
    x0_init: &[f64],
    w_init: &PiecewiseLinearSignal,
    opts: &LocalSearchOptions,
    budget: Budget<'_>,
) -> Result<LocalSearchReport> {
    if model.has_discrete_rnn() {
        return Err(Error::DiscreteRnn);
    }
    if !(opts.c > 1.0) {
        return Err(Error::Config("step factor c must exceed 1".into()));
    }
    let grid = model.grid()?;
    check_dim("local search input", model.input_dim(), w_init.dim())?;
    let w_init = if *w_init.grid() == grid {
        w_init.clone()
    } else {
        w_init.resample(grid)?
    };
    if !model.init_box.contains(x0_init) {
        return Err(Error::Config("initial condition outside X0".into()));
    }
    if (0..grid.len()).any(|k| !model.input_box.contains(w_init.node(k))) {
        return Err(Error::Config("initial input leaves U".into()));
    }
    let n = model.plant_dim();
    let mut h = opts.h0.unwrap_or(f64::NAN);

    let mut x_cur = x0_init.to_vec();
    let mut w_cur = w_init;
    let mut best: Option<Incumbent> = None;
    let mut dirs: Option<DescentDirection> = None;
    let mut d_star = f64::INFINITY;
    let (mut sims, mut lin_calls, mut iters) = (0usize, 0usize, 0usize);
    let mut history = Vec::new();
    let stop;

    loop {
        if sims >= budget.max_sims || budget.clock.elapsed() >= budget.deadline {
            stop = StopReason::Budget;
            break;
        }
        let out = simulate(model, &x_cur, &w_cur, grid)?;
        let cert = robustness(phi, &out.trajectory)?;
        sims += 1;
        iters += 1;
        let d = cert.robustness;
        history.push(d);

        if d < d_star {
            let previous = d_star;
            d_star = d;
            if d < 0.0 {
                best = Some(Incumbent { x0: x_cur, w: w_cur, cert });
                stop = StopReason::Falsified;
                break;
            }
            h *= opts.c;
            if previous.is_finite() && previous - d < opts.tol_d {
                best = Some(Incumbent { x0: x_cur, w: w_cur, cert });
                stop = StopReason::RobustnessStalled;
                break;
            }
            let (dir, evals) = descent_at(model, &out.trajectory, &w_cur, &cert, opts)?;
            lin_calls += evals;
            if h.is_nan() {
                h = match first_step(model, &dir) {
                    Some(h) => h,
                    None => {
                        best = Some(Incumbent { x0: x_cur, w: w_cur, cert });
                        stop = StopReason::StepTooSmall;
                        break;
                    }
                };
            }
            dirs = Some(dir);
            best = Some(Incumbent { x0: x_cur.clone(), w: w_cur.clone(), cert });
        } else {
            h /= opts.c;
        }
        debug_assert!(h > 0.0);
        if iters >= opts.max_iters {
            stop = StopReason::MaxIterations;
            break;
        }

        let inc = best.as_ref().expect("first pass always improves on +inf");
        let dir = dirs.as_ref().expect("directions exist once a best exists");
        let stepped: Vec<f64> = inc
            .x0
            .iter()
            .zip(&dir.dx0[..n])
            .map(|(x, d)| x + h * d)
            .collect();
        let x_new = in_box(&stepped, &model.init_box)?;
        let mut w_new = inc.w.clone();
        let mut change = x_new
            .iter()
            .zip(&inc.x0)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max);
        let mut node = vec![0.0; model.input_dim()];
        for k in 0..dir.len() {
            for (v, (w, d)) in node.iter_mut().zip(inc.w.node(k).iter().zip(dir.dw(k))) {
                *v = w + h * d;
            }
            let sat = in_box(&node, &model.input_box)?;
            for (a, b) in sat.iter().zip(inc.w.node(k)) {
                change = change.max(libm::fabs(a - b));
            }
            w_new.node_mut(k).copy_from_slice(&sat);
        }
        if change < opts.tol_x {
            stop = StopReason::StepTooSmall;
            break;
        }
        x_cur = x_new;
        w_cur = w_new;
    }

    debug_assert!(history
        .iter()
        .scan(f64::INFINITY, |m, d| {
            *m = m.min(*d);
            Some(*m)
        })
        .last()
        .map_or(true, |m| m == d_star));

    let inc = match best {
        Some(b) => b,
        None => {
            return Err(Error::Config(
                "local search budget allowed no simulation".into(),
            ))
        }
    };
    Ok(LocalSearchReport {
        initial_robustness: history.first().copied().unwrap_or(f64::NAN),
        iterations: iters,
        history,
        stop,
        result: FalsificationResult {
            falsified: inc.cert.robustness < 0.0,
            best_robustness: inc.cert.robustness,
            witness_x0: inc.x0,
            witness_w: inc.w,
            num_sims: sims,
            lin_rhs_calls: lin_calls,
            gd_invocations: 1,
            wall_time: budget.clock.elapsed(),
        },
    })
}
