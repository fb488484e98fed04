//! Witness directories: everything needed to re-simulate one search result.
//!
//! ```text
//! witness.toml     model reference, requirement, recorded robustness
//! x0.csv           initial plant state (one row)
//! w.csv            input signal at every grid node
//! trajectory.csv   simulated states at every grid node
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gbf_core::search::FalsificationResult;
use gbf_core::sim::{simulate, ClosedLoopModel};
use gbf_core::stl::{parse_formula, robustness, RobustnessCertificate};
use gbf_core::{PiecewiseLinearSignal, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::text;
use crate::io;
use crate::model::ModelSource;

pub const META_FILE: &str = "witness.toml";
pub const X0_FILE: &str = "x0.csv";
pub const W_FILE: &str = "w.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    pub spec: String,
    pub method: String,
    /// Generator seed of the run; kept as text since it spans all of `u64`.
    #[serde(with = "text")]
    pub seed: u64,
    pub run_id: usize,
    pub falsified: bool,
    pub robustness: f64,
    pub critical_time: f64,
    pub horizon: f64,
    pub step: f64,
}

impl WitnessMeta {
    pub fn source(&self) -> Result<ModelSource> {
        match (&self.model, &self.model_file) {
            (Some(n), None) => Ok(ModelSource::Builtin(n.clone())),
            (None, Some(p)) => Ok(ModelSource::File(p.clone())),
            _ => bail!("witness must name exactly one of model and model_file"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub meta: WitnessMeta,
    pub x0: Vec<f64>,
    pub w: PiecewiseLinearSignal,
}

/// Run identity recorded alongside a witness.
#[derive(Debug, Clone)]
pub struct RunTag {
    pub method: String,
    pub seed: u64,
    pub run_id: usize,
}

/// Simulates `result`'s witness and writes its directory. Returns the
/// certificate of the re-simulated trajectory.
pub fn write_witness(
    dir: &Path,
    source: &ModelSource,
    model: &ClosedLoopModel,
    spec: &str,
    tag: &RunTag,
    result: &FalsificationResult,
) -> Result<RobustnessCertificate> {
    let phi = parse_formula(spec, &model.variables)?;
    let grid = model.grid()?;
    let traj = simulate(model, &result.witness_x0, &result.witness_w, grid)?.trajectory;
    let cert = robustness(&phi, &traj)?;
    let (model_name, model_file) = match source {
        ModelSource::Builtin(n) => (Some(n.clone()), None),
        ModelSource::File(p) => (None, Some(std::path::absolute(p)?)),
    };
    let meta = WitnessMeta {
        model: model_name,
        model_file,
        spec: spec.to_string(),
        method: tag.method.clone(),
        seed: tag.seed,
        run_id: tag.run_id,
        falsified: cert.robustness < 0.0,
        robustness: cert.robustness,
        critical_time: cert.critical_time,
        horizon: grid.horizon(),
        step: grid.step(),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join(META_FILE), toml::to_string(&meta)?)?;
    io::write_vector(&dir.join(X0_FILE), "x", &result.witness_x0)?;
    io::write_signal(&dir.join(W_FILE), &result.witness_w)?;
    write_trajectory(&dir.join(TRAJECTORY_FILE), model, &traj)?;
    Ok(cert)
}

pub fn write_trajectory(path: &Path, model: &ClosedLoopModel, traj: &Trajectory) -> Result<()> {
    io::write_trajectory(path, traj, &io::plant_names(&model.variables, traj.plant_dim()))
}

pub fn read_witness(dir: &Path) -> Result<Witness> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?;
    let meta: WitnessMeta = toml::from_str(&text).with_context(|| format!("malformed {}", meta_path.display()))?;
    let x0 = io::read_vector(&dir.join(X0_FILE))?;
    let w = io::read_signal(&dir.join(W_FILE))?;
    Ok(Witness { meta, x0, w })
}
