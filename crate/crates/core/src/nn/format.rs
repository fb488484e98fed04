//! Plain-text network fixture format.
//!
//! ```text
//! # comments run to end of line
//! gbf-network 1
//! kind fnn                      # or rnn-continuous / rnn-discrete
//! layers 2
//! layer 2 3 tanh                # inputs outputs activation
//! weights                       # inputs x outputs values, row-major
//!   0.1 0.2 0.3
//!   0.4 0.5 0.6
//! bias
//!   0 0 0
//! layer 3 1 identity
//! ...
//! ```
//!
//! Recurrent networks declare `states <b>` after `kind` and then two layer
//! stacks, introduced by `state-map` and `output-map`. Numbers are written in
//! shortest round-trip form, so write/parse is bit-exact.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::{Activation, FnnSpec, Layer, Network, RnnKind, RnnSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let toks = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| {
                let line = line.split('#').next().unwrap_or("");
                line.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Self { toks, pos: 0 }
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or(0, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::NetworkFormat {
            line: self.line(),
            message: message.into(),
        })
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.toks.get(self.pos) {
            Some((_, t)) => {
                self.pos += 1;
                Ok(t)
            }
            None => self.err(format!("unexpected end of file, expected {what}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.next(kw)?;
        if t == kw {
            Ok(())
        } else {
            self.pos -= 1;
            self.err(format!("expected `{kw}`, found `{t}`"))
        }
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let t = self.next(what)?;
        t.parse().or_else(|_| {
            self.pos -= 1;
            self.err(format!("expected integer {what}, found `{t}`"))
        })
    }

    fn f64(&mut self) -> Result<f64> {
        let t = self.next("number")?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos -= 1;
                self.err(format!("expected finite number, found `{t}`"))
            }
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn parse_stack(t: &mut Tokens<'_>) -> Result<FnnSpec> {
    t.keyword("layers")?;
    let count = t.usize("layer count")?;
    if count == 0 {
        return t.err("layer count must be positive");
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        t.keyword("layer")?;
        let inputs = t.usize("input dimension")?;
        let outputs = t.usize("output dimension")?;
        let act_line = t.line();
        let activation: Activation = t.next("activation")?.parse().map_err(|e: Error| {
            Error::NetworkFormat {
                line: act_line,
                message: e.to_string(),
            }
        })?;
        t.keyword("weights")?;
        let w = (0..inputs * outputs)
            .map(|_| t.f64())
            .collect::<Result<Vec<_>>>()?;
        t.keyword("bias")?;
        let b = (0..outputs).map(|_| t.f64()).collect::<Result<Vec<_>>>()?;
        let weights = Matrix::from_row_major(inputs, outputs, w).expect("length checked");
        layers.push(Layer::new(weights, b, activation)?);
    }
    FnnSpec::new(layers)
}

/// Parses a network fixture.
pub fn parse_network(text: &str) -> Result<Network> {
    let mut t = Tokens::new(text);
    t.keyword("gbf-network")?;
    let version = t.usize("format version")?;
    if version != 1 {
        return t.err(format!("unsupported format version {version}"));
    }
    t.keyword("kind")?;
    let net = match t.next("network kind")? {
        "fnn" => Network::Fnn(parse_stack(&mut t)?),
        kind @ ("rnn-continuous" | "rnn-discrete") => {
            let rk = if kind == "rnn-continuous" {
                RnnKind::Continuous
            } else {
                RnnKind::Discrete
            };
            t.keyword("states")?;
            let b = t.usize("state dimension")?;
            t.keyword("state-map")?;
            let state = parse_stack(&mut t)?;
            t.keyword("output-map")?;
            let output = parse_stack(&mut t)?;
            Network::Rnn(RnnSpec::new(rk, b, state, output)?)
        }
        other => {
            t.pos -= 1;
            return t.err(format!("unknown network kind `{other}`"));
        }
    };
    if !t.at_end() {
        return t.err("trailing content after network");
    }
    Ok(net)
}

fn write_stack(out: &mut String, net: &FnnSpec) {
    let _ = writeln!(out, "layers {}", net.layers().len());
    for l in net.layers() {
        let _ = writeln!(out, "layer {} {} {}", l.inputs(), l.outputs(), l.activation);
        out.push_str("weights\n");
        for r in 0..l.inputs() {
            write_row(out, l.weights.row(r));
        }
        out.push_str("bias\n");
        write_row(out, &l.bias);
    }
}

fn write_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
        first = false;
    }
    out.push('\n');
}

/// Serializes a network in the fixture format.
pub fn write_network(net: &Network) -> String {
    let mut out = String::from("gbf-network 1\n");
    match net {
        Network::Fnn(f) => {
            out.push_str("kind fnn\n");
            write_stack(&mut out, f);
        }
        Network::Rnn(r) => {
            let kind = match r.kind() {
                RnnKind::Continuous => "rnn-continuous",
                RnnKind::Discrete => "rnn-discrete",
            };
            let _ = writeln!(out, "kind {kind}\nstates {}", r.state_dim());
            out.push_str("state-map\n");
            write_stack(&mut out, r.state_map());
            out.push_str("output-map\n");
            write_stack(&mut out, r.output_map());
        }
    }
    out
}
