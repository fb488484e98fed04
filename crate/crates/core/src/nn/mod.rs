//! Feed-forward and recurrent networks used as closed-loop controllers.

mod format;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use format::{parse_network, write_network};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Smooth activations only; the adjoint search needs differentiable controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Logistic => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Identity => z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" | "tansig" => Ok(Activation::Tanh),
            "logistic" | "logsig" | "sigmoid" => Ok(Activation::Logistic),
            "identity" | "purelin" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Network(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One layer `y = φ(Wᵀ u + b)` with `W` of shape inputs × outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_dim("layer bias", weights.cols(), bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    fn forward(&self, u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (ui, row) in u.iter().zip(0..self.inputs()) {
            for (o, w) in out.iter_mut().zip(self.weights.row(row)) {
                *o += w * ui;
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
    }
}

/// Memoryless multi-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnSpec {
    layers: Vec<Layer>,
}

impl FnnSpec {
    /// Validates that adjacent layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Network("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Network(format!(
                    "layer {} has {} outputs but layer {} expects {} inputs",
                    i + 1,
                    pair[0].outputs(),
                    i + 2,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Evaluates the network, writing into `out`.
    pub fn eval_into(&self, u: &[f64], out: &mut Vec<f64>) -> Result<()> {
        check_dim("network input", self.inputs(), u.len())?;
        let mut scratch = Vec::with_capacity(out.capacity());
        out.clear();
        out.extend_from_slice(u);
        for layer in &self.layers {
            layer.forward(out, &mut scratch);
            core::mem::swap(out, &mut scratch);
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.eval_into(u, &mut out)?;
        Ok(out)
    }
}

/// Evaluates `net` at `u`.
pub fn fnn_eval(net: &FnnSpec, u: &[f64]) -> Result<Vec<f64>> {
    net.eval(u)
}

/// Whether the recurrent state evolves in continuous or discrete time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnKind {
    /// `x_nn' = f(x_nn, u)`
    Continuous,
    /// `x_nn[k] = f(x_nn[k-1], u[k])`, updated once per simulation step.
    Discrete,
}

/// Recurrent network `x_nn' = f(x_nn, u)`, `y = g(x_nn)`, started from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnSpec {
    kind: RnnKind,
    state_dim: usize,
    state_map: FnnSpec,
    output_map: FnnSpec,
}

impl RnnSpec {
    pub fn new(kind: RnnKind, state_dim: usize, state_map: FnnSpec, output_map: FnnSpec) -> Result<Self> {
        if state_map.inputs() <= state_dim {
            return Err(Error::Network(format!(
                "state map takes {} inputs; needs the {state_dim} states plus at least one input",
                state_map.inputs()
            )));
        }
        if state_map.outputs() != state_dim {
            return Err(Error::Network(format!(
                "state map has {} outputs, expected {state_dim}",
                state_map.outputs()
            )));
        }
        if output_map.inputs() != state_dim {
            return Err(Error::Network(format!(
                "output map takes {} inputs, expected {state_dim}",
                output_map.inputs()
            )));
        }
        Ok(Self {
            kind,
            state_dim,
            state_map,
            output_map,
        })
    }

    pub fn kind(&self) -> RnnKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_map.inputs() - self.state_dim
    }

    pub fn outputs(&self) -> usize {
        self.output_map.outputs()
    }

    pub fn state_map(&self) -> &FnnSpec {
        &self.state_map
    }

    pub fn output_map(&self) -> &FnnSpec {
        &self.output_map
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.state_dim]
    }

    /// `f(x_nn, u)`: the state derivative (continuous) or next state (discrete).
    pub fn state_update(&self, x_nn: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim("recurrent state", self.state_dim, x_nn.len())?;
        check_dim("recurrent input", self.input_dim(), u.len())?;
        let mut z = Vec::with_capacity(x_nn.len() + u.len());
        z.extend_from_slice(x_nn);
        z.extend_from_slice(u);
        self.state_map.eval(&z)
    }

    pub fn output(&self, x_nn: &[f64]) -> Result<Vec<f64>> {
        check_dim("recurrent state", self.state_dim, x_nn.len())?;
        self.output_map.eval(x_nn)
    }
}

/// `f_c(x_nn, u)` for a continuous-time network.
pub fn rnn_derivative(net: &RnnSpec, x_nn: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    net.state_update(x_nn, u)
}

/// `g(x_nn)`.
pub fn rnn_output(net: &RnnSpec, x_nn: &[f64]) -> Result<Vec<f64>> {
    net.output(x_nn)
}

/// Either kind of controller network.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Fnn(FnnSpec),
    Rnn(RnnSpec),
}

impl Network {
    pub fn state_dim(&self) -> usize {
        match self {
            Network::Fnn(_) => 0,
            Network::Rnn(r) => r.state_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Fnn(f) => f.inputs(),
            Network::Rnn(r) => r.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::Fnn(f) => f.outputs(),
            Network::Rnn(r) => r.outputs(),
        }
    }
}
