//! Model lookup: built-in models, network fixtures on disk, and model files.
//!
//! A model file is TOML naming a built-in plant family plus, for the two case
//! studies, the network fixture that closes the loop:
//!
//! ```toml
//! family = "condenser-surrogate"
//! network = "condenser_rnn.net"   # relative to this file, or to $GBF_FIXTURES
//! spec = "always[30,35] (p in [87,87.5])"   # optional
//! horizon = 35.0                  # optional, with step
//! input_lower = [3.99]            # optional box overrides
//! input_upper = [4.01]
//!
//! [condenser]                     # optional plant parameter overrides
//! p0 = 87.26
//! ```

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gbf_core::benchmarks::{builtin_model, condenser_surrogate, fnn_nonlinear, CondenserParams, BUILTIN_MODELS};
use gbf_core::nn::{parse_network, Network};
use gbf_core::sim::ClosedLoopModel;
use gbf_core::BoxSet;
use serde::Deserialize;

/// Environment variable naming the fixture directory.
pub const FIXTURES_ENV: &str = "GBF_FIXTURES";

/// Network fixture file of a built-in case study.
pub fn fixture_file(model: &str) -> Option<&'static str> {
    match model {
        "fnn-nonlinear" => Some("fnn_nonlinear.net"),
        "condenser-surrogate" => Some("condenser_rnn.net"),
        _ => None,
    }
}

fn fixtures_dir() -> Option<PathBuf> {
    std::env::var_os(FIXTURES_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn read_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading network {}", path.display()))?;
    parse_network(&text).with_context(|| format!("in network file {}", path.display()))
}

/// Wires `net` into the plant family `family`.
fn assemble(family: &str, net: Option<Network>, condenser: CondenserParams) -> Result<ClosedLoopModel> {
    match (family, net) {
        ("fnn-nonlinear", Some(Network::Fnn(n))) => Ok(fnn_nonlinear(n)?),
        ("condenser-surrogate", Some(Network::Rnn(n))) => Ok(condenser_surrogate(n, condenser)?),
        ("fnn-nonlinear", Some(_)) => bail!("fnn-nonlinear needs a feed-forward network"),
        ("condenser-surrogate", Some(_)) => bail!("condenser-surrogate needs a recurrent network"),
        (_, Some(_)) => bail!("model family '{family}' takes no network"),
        (_, None) => Ok(builtin_model(family)?),
    }
}

/// A built-in model; with `GBF_FIXTURES` set, case-study networks are read
/// from that directory instead of the compiled-in copies.
pub fn load_builtin(name: &str) -> Result<ClosedLoopModel> {
    match (fixture_file(name), fixtures_dir()) {
        (Some(file), Some(dir)) => {
            let net = read_network(&dir.join(file))?;
            assemble(name, Some(net), CondenserParams::default())
        }
        _ => Ok(builtin_model(name)?),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CondenserOverrides {
    w_nom: Option<f64>,
    w_span: Option<f64>,
    p0: Option<f64>,
    tau_p: Option<f64>,
    tau_q: Option<f64>,
    gain_q: Option<f64>,
    relief_level: Option<f64>,
    relief_rate: Option<f64>,
    relief_width: Option<f64>,
}

impl CondenserOverrides {
    fn apply(&self, mut p: CondenserParams) -> CondenserParams {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.w_nom, self.w_nom);
        set(&mut p.w_span, self.w_span);
        set(&mut p.p0, self.p0);
        set(&mut p.tau_p, self.tau_p);
        set(&mut p.tau_q, self.tau_q);
        set(&mut p.gain_q, self.gain_q);
        set(&mut p.relief_level, self.relief_level);
        set(&mut p.relief_rate, self.relief_rate);
        set(&mut p.relief_width, self.relief_width);
        p
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    family: String,
    network: Option<PathBuf>,
    name: Option<String>,
    spec: Option<String>,
    horizon: Option<f64>,
    step: Option<f64>,
    input_lower: Option<Vec<f64>>,
    input_upper: Option<Vec<f64>>,
    init_lower: Option<Vec<f64>>,
    init_upper: Option<Vec<f64>>,
    condenser: Option<CondenserOverrides>,
}

fn override_box(current: &BoxSet, lo: Option<Vec<f64>>, hi: Option<Vec<f64>>) -> Result<BoxSet> {
    if lo.is_none() && hi.is_none() {
        return Ok(current.clone());
    }
    let lo = lo.unwrap_or_else(|| current.lower().to_vec());
    let hi = hi.unwrap_or_else(|| current.upper().to_vec());
    Ok(BoxSet::new(lo, hi)?)
}

pub fn load_model_file(path: &Path) -> Result<ClosedLoopModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model file {}", path.display()))?;
    let file: ModelFile = toml::from_str(&text).with_context(|| format!("malformed model file {}", path.display()))?;
    if !BUILTIN_MODELS.contains(&file.family.as_str()) {
        bail!("unknown model family '{}' (available: {})", file.family, BUILTIN_MODELS.join(", "));
    }
    let net = match &file.network {
        None if fixture_file(&file.family).is_some() => bail!("model family '{}' needs a network", file.family),
        None => None,
        Some(rel) => {
            let base = fixtures_dir().unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
            Some(read_network(&base.join(rel))?)
        }
    };
    if file.condenser.is_some() && file.family != "condenser-surrogate" {
        bail!("[condenser] parameters only apply to the condenser-surrogate family");
    }
    let params = file.condenser.unwrap_or_default().apply(CondenserParams::default());
    let mut model = assemble(&file.family, net, params)?;
    if let Some(name) = file.name {
        model.name = name;
    }
    if let Some(spec) = file.spec {
        model.spec = spec;
    }
    match (file.horizon, file.step) {
        (Some(h), Some(s)) => (model.horizon, model.step) = (h, s),
        (Some(h), None) => model.horizon = h,
        (None, Some(s)) => model.step = s,
        (None, None) => {}
    }
    model.input_box = override_box(&model.input_box, file.input_lower, file.input_upper)?;
    model.init_box = override_box(&model.init_box, file.init_lower, file.init_upper)?;
    model.validate().map_err(|e| anyhow!("model file {}: {e}", path.display()))?;
    Ok(model)
}

/// Where a model came from; recorded in witnesses so replays rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Builtin(String),
    File(PathBuf),
}

impl ModelSource {
    pub fn load(&self) -> Result<ClosedLoopModel> {
        match self {
            ModelSource::Builtin(n) => load_builtin(n),
            ModelSource::File(p) => load_model_file(p),
        }
    }
}
