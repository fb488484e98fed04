//! Closed-loop models and their fixed-step RK4 simulation.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Network, RnnKind};
use crate::signals::{BoxSet, PiecewiseLinearSignal, TimeGrid, Trajectory};
use crate::stl::Variables;

/// Plant dynamics `x_p' = f_p(x_p, w, y_nn)`.
///
/// Plants with explicit time dependence carry their own clock coordinate
/// (derivative 1, initial value 0) so the closed loop stays autonomous.
pub trait Plant: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Number of controller outputs the plant consumes.
    fn controller_dim(&self) -> usize;
    fn derivative(&self, x: &[f64], w: &[f64], y_nn: &[f64], out: &mut [f64]);
}

/// Optional analytic Jacobians `(∂f/∂x, ∂f/∂w)` of the whole closed loop.
pub trait Jacobian: Send + Sync + fmt::Debug {
    fn jacobian(&self, x: &[f64], w: &[f64]) -> (Matrix, Matrix);
}

/// Affine map from plant state and exogenous input to the network input:
/// `u = S x_p + G w + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wiring {
    pub state_gain: Matrix,
    pub input_gain: Matrix,
    pub offset: Vec<f64>,
}

impl Wiring {
    pub fn new(state_gain: Matrix, input_gain: Matrix, offset: Vec<f64>) -> Result<Self> {
        check_dim("wiring rows", state_gain.rows(), input_gain.rows())?;
        check_dim("wiring offset", state_gain.rows(), offset.len())?;
        Ok(Self {
            state_gain,
            input_gain,
            offset,
        })
    }

    pub fn outputs(&self) -> usize {
        self.offset.len()
    }

    fn apply(&self, x_p: &[f64], w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.offset);
        for (r, o) in out.iter_mut().enumerate() {
            *o += self
                .state_gain
                .row(r)
                .iter()
                .zip(x_p)
                .map(|(a, b)| a * b)
                .sum::<f64>();
            *o += self
                .input_gain
                .row(r)
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
}

/// A network together with the wiring that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub network: Network,
    pub wiring: Wiring,
}

/// Plant plus optional network controller, with the search sets and default requirement.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    pub name: String,
    pub plant: Arc<dyn Plant>,
    pub controller: Option<Controller>,
    pub input_box: BoxSet,
    pub init_box: BoxSet,
    pub horizon: f64,
    pub step: f64,
    /// Default requirement in formula syntax.
    pub spec: String,
    pub variables: Variables,
    /// Named constants the model or its default requirement depends on.
    pub constants: Vec<(String, f64)>,
    pub jacobian: Option<Arc<dyn Jacobian>>,
}

impl ClosedLoopModel {
    /// Checks that plant, controller, wiring and boxes agree on dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.dim();
        check_dim("init box", n, self.init_box.dim())?;
        check_dim("input box", self.plant.input_dim(), self.input_box.dim())?;
        match &self.controller {
            None => check_dim("controller outputs", self.plant.controller_dim(), 0)?,
            Some(c) => {
                check_dim(
                    "controller outputs",
                    self.plant.controller_dim(),
                    c.network.output_dim(),
                )?;
                check_dim("network inputs", c.network.input_dim(), c.wiring.outputs())?;
                check_dim("wiring state columns", n, c.wiring.state_gain.cols())?;
                check_dim(
                    "wiring input columns",
                    self.plant.input_dim(),
                    c.wiring.input_gain.cols(),
                )?;
            }
        }
        if self.variables.dims > n {
            return Err(Error::Config(alloc::format!(
                "model exposes {} spec coordinates but the plant has {n}",
                self.variables.dims
            )));
        }
        self.grid().map(|_| ())
    }

    pub fn plant_dim(&self) -> usize {
        self.plant.dim()
    }

    pub fn nn_dim(&self) -> usize {
        self.controller.as_ref().map_or(0, |c| c.network.state_dim())
    }

    pub fn state_dim(&self) -> usize {
        self.plant_dim() + self.nn_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.step)
    }

    pub fn has_discrete_rnn(&self) -> bool {
        matches!(
            &self.controller,
            Some(Controller { network: Network::Rnn(r), .. }) if r.kind() == RnnKind::Discrete
        )
    }

    /// `[x_p0, zeros(b)]`
    pub fn initial_state(&self, x_p0: &[f64]) -> Vec<f64> {
        let mut x = x_p0.to_vec();
        x.resize(self.state_dim(), 0.0);
        x
    }

    /// Closed-loop derivative; on a non-finite component returns its index.
    fn rhs_into(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> core::result::Result<(), usize> {
        let n = self.plant_dim();
        let (x_p, x_nn) = x.split_at(n);
        let mut u = Vec::new();
        let y: Vec<f64> = match &self.controller {
            None => Vec::new(),
            Some(c) => match &c.network {
                Network::Fnn(f) => {
                    c.wiring.apply(x_p, w, &mut u);
                    f.eval(&u).map_err(|_| 0usize)?
                }
                Network::Rnn(r) => r.output(x_nn).map_err(|_| n)?,
            },
        };
        self.plant.derivative(x_p, w, &y, &mut out[..n]);
        if let Some(Controller {
            network: Network::Rnn(r),
            wiring,
        }) = &self.controller
        {
            match r.kind() {
                RnnKind::Continuous => {
                    wiring.apply(x_p, w, &mut u);
                    let d = r.state_update(x_nn, &u).map_err(|_| n)?;
                    out[n..].copy_from_slice(&d);
                }
                RnnKind::Discrete => out[n..].iter_mut().for_each(|v| *v = 0.0),
            }
        }
        match out.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(i),
            None => Ok(()),
        }
    }

    fn discrete_update(&self, x: &mut [f64], w: &[f64]) -> Result<()> {
        if let Some(Controller {
            network: Network::Rnn(r),
            wiring,
        }) = &self.controller
        {
            if r.kind() == RnnKind::Discrete {
                let n = self.plant_dim();
                let mut u = Vec::new();
                wiring.apply(&x[..n], w, &mut u);
                let next = r.state_update(&x[n..], &u)?;
                x[n..].copy_from_slice(&next);
            }
        }
        Ok(())
    }
}

/// Closed-loop derivative `f(x, w)` at state `x = [x_p, x_nn]`.
pub fn rhs(model: &ClosedLoopModel, x: &[f64], w_t: &[f64]) -> Result<Vec<f64>> {
    check_dim("state", model.state_dim(), x.len())?;
    check_dim("input", model.input_dim(), w_t.len())?;
    let mut out = vec![0.0; x.len()];
    model
        .rhs_into(x, w_t, &mut out)
        .map_err(|index| Error::NonFiniteDerivative { index })?;
    Ok(out)
}

/// Trajectory plus the number of right-hand-side evaluations it took.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub rhs_evals: usize,
}

/// Classical RK4 on `grid` from `[x_p0, 0]`, with `w` sampled at the stage times.
pub fn simulate(
    model: &ClosedLoopModel,
    x_p0: &[f64],
    w: &PiecewiseLinearSignal,
    grid: TimeGrid,
) -> Result<SimOutput> {
    check_dim("initial plant state", model.plant_dim(), x_p0.len())?;
    check_dim("input signal", model.input_dim(), w.dim())?;
    if let Some(i) = (0..x_p0.len()).find(|&i| {
        !(model.init_box.lower()[i] <= x_p0[i] && x_p0[i] <= model.init_box.upper()[i])
    }) {
        return Err(Error::OutsideInitBox(i));
    }
    if w.grid().horizon() < grid.horizon() {
        return Err(Error::Domain {
            t: grid.horizon(),
            lo: 0.0,
            hi: w.grid().horizon(),
        });
    }
    let dim = model.state_dim();
    let m = model.input_dim();
    let mut data = Vec::with_capacity(dim * grid.len());
    let mut x = model.initial_state(x_p0);
    data.extend_from_slice(&x);

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let (mut w0, mut wm, mut w1) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut evals = 0;
    let diverged = |t: f64, index: usize| Error::Diverged { t, index };

    for k in 0..grid.len() - 1 {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let h = t1 - t0;
        w.eval_into(t0, &mut w0)?;
        w.eval_into(t0 + 0.5 * h, &mut wm)?;
        w.eval_into(t1, &mut w1)?;

        model.rhs_into(&x, &w0, &mut k1).map_err(|i| diverged(t0, i))?;
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        model.rhs_into(&tmp, &wm, &mut k2).map_err(|i| diverged(t0, i))?;
        for i in 0..dim {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        model.rhs_into(&tmp, &wm, &mut k3).map_err(|i| diverged(t0, i))?;
        for i in 0..dim {
            tmp[i] = x[i] + h * k3[i];
        }
        model.rhs_into(&tmp, &w1, &mut k4).map_err(|i| diverged(t1, i))?;
        evals += 4;
        for i in 0..dim {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        model.discrete_update(&mut x, &w1)?;
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(diverged(t1, i));
        }
        data.extend_from_slice(&x);
    }
    Ok(SimOutput {
        trajectory: Trajectory::new(grid, model.plant_dim(), model.nn_dim(), data)?,
        rhs_evals: evals,
    })
}
