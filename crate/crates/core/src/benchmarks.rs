//! Plants and built-in closed-loop models, including the two case studies.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{parse_network, Activation, FnnSpec, Layer, Network, RnnKind, RnnSpec};
use crate::signals::BoxSet;
use crate::sim::{ClosedLoopModel, Controller, Plant, Wiring};
use crate::stl::Variables;

/// `x' = A x + B w + C y + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub offset: Vec<f64>,
}

impl LinearPlant {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.rows();
        Self::with_controller(a, b, Matrix::zeros(n, 0))
    }

    pub fn with_controller(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.rows();
        check_dim("A columns", n, a.cols())?;
        check_dim("B rows", n, b.rows())?;
        check_dim("C rows", n, c.rows())?;
        Ok(Self {
            a,
            b,
            c,
            offset: vec![0.0; n],
        })
    }
}

impl Plant for LinearPlant {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn input_dim(&self) -> usize {
        self.b.cols()
    }

    fn controller_dim(&self) -> usize {
        self.c.cols()
    }

    fn derivative(&self, x: &[f64], w: &[f64], y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = |m: &Matrix, v: &[f64]| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            *o = row(&self.a, x) + row(&self.b, w) + row(&self.c, y) + self.offset[i];
        }
    }
}

type PlantFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// A plant given by a closure `(x, w, y, out)`.
pub struct FnPlant {
    dim: usize,
    input_dim: usize,
    controller_dim: usize,
    f: Box<PlantFn>,
}

impl FnPlant {
    /// Plant without controller outputs; the closure receives `(x, w, out)`.
    pub fn new(
        dim: usize,
        input_dim: usize,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self::with_controller(dim, input_dim, 0, move |x, w, _, out| f(x, w, out))
    }

    pub fn with_controller(
        dim: usize,
        input_dim: usize,
        controller_dim: usize,
        f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            input_dim,
            controller_dim,
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPlant")
            .field("dim", &self.dim)
            .field("input_dim", &self.input_dim)
            .field("controller_dim", &self.controller_dim)
            .finish_non_exhaustive()
    }
}

impl Plant for FnPlant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn controller_dim(&self) -> usize {
        self.controller_dim
    }

    fn derivative(&self, x: &[f64], w: &[f64], y: &[f64], out: &mut [f64]) {
        (self.f)(x, w, y, out)
    }
}

/// Two-state nonlinear plant driven by a feed-forward controller, with a
/// decaying oscillatory disturbance:
///
/// ```text
/// x1' = -0.5 x1 - 2 e^{-0.5 t} sin 3t + sin x2
/// x2' = -x2 + x1^2 cos(x2 + w) + y
/// ```
///
/// State is `[x1, x2, t]`; the clock coordinate has derivative 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FnnNonlinearPlant;

impl Plant for FnnNonlinearPlant {
    fn dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn controller_dim(&self) -> usize {
        1
    }

    fn derivative(&self, x: &[f64], w: &[f64], y: &[f64], out: &mut [f64]) {
        let (x1, x2, t) = (x[0], x[1], x[2]);
        out[0] = -0.5 * x1 - 2.0 * libm::exp(-0.5 * t) * libm::sin(3.0 * t) + libm::sin(x2);
        out[1] = -x2 + x1 * x1 * libm::cos(x2 + w[0]) + y[0];
        out[2] = 1.0;
    }
}

/// Parameters of the condenser surrogate.
///
/// With `s = (w − w_nom)/w_span` the normalized steam flow and `y` the
/// controller's cooling command:
///
/// ```text
/// q' = (s − q) / tau_q
/// p' = (p0 − p + gain_q q + y − relief(p) + relief(p0)) / tau_p
/// relief(p) = relief_rate · relief_width · softplus((p − relief_level)/relief_width)
/// ```
///
/// `q` is the condensing load lagging the flow. The relief term is a smooth
/// valve that caps pressure near `relief_level` and is negligible below it;
/// the constant `relief(p0)` keeps `p0` an exact equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondenserParams {
    pub w_nom: f64,
    pub w_span: f64,
    pub p0: f64,
    pub tau_p: f64,
    pub tau_q: f64,
    pub gain_q: f64,
    pub relief_level: f64,
    pub relief_rate: f64,
    pub relief_width: f64,
}

impl Default for CondenserParams {
    fn default() -> Self {
        Self {
            w_nom: 4.0,
            w_span: 0.01,
            p0: 87.26,
            tau_p: 0.5,
            tau_q: 0.3,
            gain_q: 0.95,
            relief_level: 87.37,
            relief_rate: 50.0,
            relief_width: 0.01,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl CondenserParams {
    pub fn relief(&self, p: f64) -> f64 {
        self.relief_rate * self.relief_width * softplus((p - self.relief_level) / self.relief_width)
    }
}

/// Pressure `p` and condensing load `q` of the condenser surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondenserPlant {
    pub params: CondenserParams,
}

impl Plant for CondenserPlant {
    fn dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn controller_dim(&self) -> usize {
        1
    }

    fn derivative(&self, x: &[f64], w: &[f64], y: &[f64], out: &mut [f64]) {
        let c = &self.params;
        let (p, q) = (x[0], x[1]);
        let s = (w[0] - c.w_nom) / c.w_span;
        let relief = c.relief(p) - c.relief(c.p0);
        out[0] = (c.p0 - p + c.gain_q * q + y[0] - relief) / c.tau_p;
        out[1] = (s - q) / c.tau_q;
    }
}

/// Gains of the tanh-saturated PI controller realized as a continuous RNN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhPiGains {
    pub kp: f64,
    pub ki: f64,
    /// Time constant of the error filter state.
    pub tau_f: f64,
    /// Output saturation level.
    pub limit: f64,
}

impl Default for TanhPiGains {
    /// The gains baked into the shipped condenser fixture.
    fn default() -> Self {
        Self {
            kp: 2.0,
            ki: 2.0,
            tau_f: 0.2,
            limit: 2.0,
        }
    }
}

/// RNN with states `[filtered error, integral]` driven by the error `e`:
/// `xf' = (e − xf)/tau_f`, `xi' = e`, `y = limit · tanh((kp xf + ki xi)/limit)`.
pub fn tanh_pi_rnn(g: &TanhPiGains) -> Result<RnnSpec> {
    let state_map = FnnSpec::new(vec![Layer::new(
        Matrix::from_rows(&[
            &[-1.0 / g.tau_f, 0.0],
            &[0.0, 0.0],
            &[1.0 / g.tau_f, 1.0],
        ])
        .expect("rectangular"),
        vec![0.0, 0.0],
        Activation::Identity,
    )?])?;
    let output_map = FnnSpec::new(vec![
        Layer::new(
            Matrix::from_rows(&[&[g.kp / g.limit], &[g.ki / g.limit]]).expect("rectangular"),
            vec![0.0],
            Activation::Tanh,
        )?,
        Layer::new(
            Matrix::from_rows(&[&[g.limit]]).expect("rectangular"),
            vec![0.0],
            Activation::Identity,
        )?,
    ])?;
    RnnSpec::new(RnnKind::Continuous, 2, state_map, output_map)
}

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: [&str; 6] = [
    "fnn-nonlinear",
    "condenser-surrogate",
    "decay",
    "integrator",
    "zero",
    "linear-rnn",
];

const FNN_FIXTURE: &str = include_str!("../fixtures/fnn_nonlinear.net");
const CONDENSER_FIXTURE: &str = include_str!("../fixtures/condenser_rnn.net");

/// Network text shipped for a case-study model, by file name.
pub fn builtin_fixture(file: &str) -> Option<&'static str> {
    match file {
        "fnn_nonlinear.net" => Some(FNN_FIXTURE),
        "condenser_rnn.net" => Some(CONDENSER_FIXTURE),
        _ => None,
    }
}

/// Horizon, step and requirement constants of the FNN case study.
pub mod fnn_case {
    pub const HORIZON: f64 = 20.0;
    pub const STEP: f64 = HORIZON / 1000.0;
    /// Width of the rise-detection window.
    pub const EPSILON: f64 = 0.1;
    /// Span of rise times checked by the outer `always`.
    pub const RISE_SPAN: f64 = 8.0;
    /// How long the signal must then stay below the threshold.
    pub const SETTLE_HOLD: f64 = 5.0;
    pub const SETTLE_WITHIN: f64 = 7.0;
    pub const THRESHOLD: f64 = 0.1;
}

/// Horizon, step and operating point of the condenser surrogate.
pub mod condenser_case {
    pub const HORIZON: f64 = 35.0;
    pub const STEP: f64 = 0.01;
    pub const W_LO: f64 = 3.99;
    pub const W_HI: f64 = 4.01;
}

/// The FNN case study wired to `net` (inputs `[x1, x2]`, one output).
pub fn fnn_nonlinear(net: FnnSpec) -> Result<ClosedLoopModel> {
    use fnn_case::*;
    let wiring = Wiring::new(
        Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).expect("rectangular"),
        Matrix::zeros(2, 1),
        vec![0.0, 0.0],
    )?;
    let spec = format!(
        "always[0,{RISE_SPAN:?}] ((x1 < 0 and eventually[0,{EPSILON:?}] (x1 > 0)) -> \
         eventually[0,{SETTLE_WITHIN:?}] always[0,{SETTLE_HOLD:?}] (x1 < {THRESHOLD:?}))"
    );
    let model = ClosedLoopModel {
        name: "fnn-nonlinear".into(),
        plant: Arc::new(FnnNonlinearPlant),
        controller: Some(Controller {
            network: Network::Fnn(net),
            wiring,
        }),
        input_box: BoxSet::new(vec![-0.1], vec![0.1])?,
        init_box: BoxSet::point(vec![-0.2, 5.0, 0.0])?,
        horizon: HORIZON,
        step: STEP,
        spec,
        variables: Variables::new(2),
        constants: vec![
            ("epsilon".to_string(), EPSILON),
            ("rise_span".to_string(), RISE_SPAN),
            ("settle_within".to_string(), SETTLE_WITHIN),
            ("settle_hold".to_string(), SETTLE_HOLD),
            ("threshold".to_string(), THRESHOLD),
        ],
        jacobian: None,
    };
    model.validate()?;
    Ok(model)
}

/// The condenser surrogate with plant parameters `params` and controller `net`
/// (one input: the pressure error `p0 − p`; the nominal pressure is the setpoint).
pub fn condenser_surrogate(net: RnnSpec, params: CondenserParams) -> Result<ClosedLoopModel> {
    use condenser_case::*;
    let wiring = Wiring::new(
        Matrix::from_rows(&[&[-1.0, 0.0]]).expect("rectangular"),
        Matrix::zeros(1, 1),
        vec![params.p0],
    )?;
    let model = ClosedLoopModel {
        name: "condenser-surrogate".into(),
        plant: Arc::new(CondenserPlant { params }),
        controller: Some(Controller {
            network: Network::Rnn(net),
            wiring,
        }),
        input_box: BoxSet::new(vec![W_LO], vec![W_HI])?,
        init_box: BoxSet::point(vec![params.p0, 0.0])?,
        horizon: HORIZON,
        step: STEP,
        spec: "always[30,35] (p in [87,87.5])".into(),
        variables: Variables::new(2).with_alias("p", 0).with_alias("q", 1),
        constants: vec![
            ("setpoint".to_string(), params.p0),
            ("w_nom".to_string(), params.w_nom),
            ("w_span".to_string(), params.w_span),
            ("p0".to_string(), params.p0),
            ("tau_p".to_string(), params.tau_p),
            ("tau_q".to_string(), params.tau_q),
            ("gain_q".to_string(), params.gain_q),
            ("relief_level".to_string(), params.relief_level),
            ("relief_rate".to_string(), params.relief_rate),
            ("relief_width".to_string(), params.relief_width),
        ],
        jacobian: None,
    };
    model.validate()?;
    Ok(model)
}

fn toy(
    name: &str,
    plant: LinearPlant,
    init: BoxSet,
    input: BoxSet,
    horizon: f64,
    step: f64,
    spec: &str,
) -> Result<ClosedLoopModel> {
    let model = ClosedLoopModel {
        name: name.into(),
        variables: Variables::new(plant.dim()),
        plant: Arc::new(plant),
        controller: None,
        input_box: input,
        init_box: init,
        horizon,
        step,
        spec: spec.into(),
        constants: Vec::new(),
        jacobian: None,
    };
    model.validate()?;
    Ok(model)
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_rows(&[&[v]]).expect("1x1")
}

fn fixture_network(text: &str, file: &str) -> Result<Network> {
    parse_network(text).map_err(|e| Error::Network(format!("built-in fixture {file}: {e}")))
}

/// A built-in model by name; see [`BUILTIN_MODELS`].
pub fn builtin_model(name: &str) -> Result<ClosedLoopModel> {
    match name {
        "fnn-nonlinear" => match fixture_network(FNN_FIXTURE, "fnn_nonlinear.net")? {
            Network::Fnn(net) => fnn_nonlinear(net),
            Network::Rnn(_) => Err(Error::Network("fnn_nonlinear.net is not a feed-forward network".into())),
        },
        "condenser-surrogate" => match fixture_network(CONDENSER_FIXTURE, "condenser_rnn.net")? {
            Network::Rnn(net) => condenser_surrogate(net, CondenserParams::default()),
            Network::Fnn(_) => Err(Error::Network("condenser_rnn.net is not a recurrent network".into())),
        },
        "decay" => toy(
            name,
            LinearPlant::new(scalar(-1.0), scalar(1.0))?,
            BoxSet::new(vec![0.5], vec![1.5])?,
            BoxSet::new(vec![-0.5], vec![0.5])?,
            5.0,
            0.01,
            "always[0,5] (x1 < 2)",
        ),
        "integrator" => toy(
            name,
            LinearPlant::new(scalar(0.0), scalar(1.0))?,
            BoxSet::point(vec![0.0])?,
            BoxSet::new(vec![-1.0], vec![1.0])?,
            2.0,
            0.01,
            "always[0,2] (x1 in [-1.5,1.5])",
        ),
        "zero" => toy(
            name,
            LinearPlant::new(scalar(0.0), scalar(0.0))?,
            BoxSet::new(vec![-2.0], vec![0.0])?,
            BoxSet::point(vec![0.0])?,
            1.0,
            0.01,
            "always[0,1] (x1 > -1)",
        ),
        "linear-rnn" => {
            // Plant x' = y − w; network x_nn' = −x_nn + w, y = x_nn.
            let plant = LinearPlant::with_controller(scalar(0.0), scalar(-1.0), scalar(1.0))?;
            let state_map = FnnSpec::new(vec![Layer::new(
                Matrix::from_rows(&[&[-1.0], &[1.0]]).expect("2x1"),
                vec![0.0],
                Activation::Identity,
            )?])?;
            let output_map = FnnSpec::new(vec![Layer::new(scalar(1.0), vec![0.0], Activation::Identity)?])?;
            let net = RnnSpec::new(RnnKind::Continuous, 1, state_map, output_map)?;
            let model = ClosedLoopModel {
                name: name.into(),
                plant: Arc::new(plant),
                controller: Some(Controller {
                    network: Network::Rnn(net),
                    wiring: Wiring::new(Matrix::zeros(1, 1), scalar(1.0), vec![0.0])?,
                }),
                input_box: BoxSet::new(vec![0.0], vec![1.0])?,
                init_box: BoxSet::new(vec![-1.0], vec![1.0])?,
                horizon: 10.0,
                step: 0.01,
                spec: "always[0,10] (x1 in [-1,1])".into(),
                variables: Variables::new(1),
                constants: Vec::new(),
                jacobian: None,
            };
            model.validate()?;
            Ok(model)
        }
        _ => Err(Error::UnknownModel {
            name: name.into(),
            available: BUILTIN_MODELS.join(", "),
        }),
    }
}
