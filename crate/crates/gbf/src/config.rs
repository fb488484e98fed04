//! Run configuration: everything a `falsify` invocation depends on.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use gbf_core::adjoint::LocalSearchOptions;
use gbf_core::search::{Method, SaParams, SearchConfig, WInit};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Serde adapter through `Display`/`FromStr`.
pub(crate) mod text {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod text_list {
    use super::*;

    pub fn serialize<T: Display, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Vec<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaConfig {
    pub init_temp_factor: f64,
    pub cooling: f64,
    pub proposal_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    pub c: f64,
    pub max_iters: usize,
    pub tol_d: f64,
    pub tol_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_lin_samples: Option<usize>,
}

/// A complete, serializable falsification request.
///
/// Exactly one of `model` and `model_file` names the system; `spec` and
/// `spec_file` optionally replace its default requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    #[serde(with = "text_list")]
    pub methods: Vec<Method>,
    pub seed: u64,
    pub runs: usize,
    pub max_sims: usize,
    /// Seconds per run.
    pub time_limit: f64,
    #[serde(with = "text")]
    pub w_init: WInit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stall_trigger: Option<usize>,
    pub c_max: usize,
    pub control_points: usize,
    pub jobs: usize,
    /// Result CSV; the summary, the config copy and the witnesses go next to it.
    pub out: PathBuf,
    pub sa: SaConfig,
    pub local: LocalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let base = SearchConfig::new(Method::SaGd, 0);
        Self {
            model: None,
            model_file: None,
            spec: None,
            spec_file: None,
            methods: vec![base.method],
            seed: base.seed,
            runs: 1,
            max_sims: base.max_sims,
            time_limit: base.time_limit,
            w_init: base.w_init,
            stall_trigger: base.stall_trigger,
            c_max: base.c_max,
            control_points: base.control_points,
            jobs: 1,
            out: PathBuf::from("gbf-out/results.csv"),
            sa: SaConfig {
                init_temp_factor: base.sa.init_temp_factor,
                cooling: base.sa.cooling,
                proposal_scale: base.sa.proposal_scale,
            },
            local: LocalConfig {
                h0: base.local.h0,
                c: base.local.c,
                max_iters: base.local.max_iters,
                tol_d: base.local.tol_d,
                tol_x: base.local.tol_x,
                num_lin_samples: base.local.num_lin_samples,
            },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed run configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing run configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.model, &self.model_file) {
            (Some(_), Some(_)) => bail!("give either a model name or a model file, not both"),
            (None, None) => bail!("no model given (use --model or --model-file)"),
            _ => {}
        }
        if self.spec.is_some() && self.spec_file.is_some() {
            bail!("give either a spec or a spec file, not both");
        }
        if self.methods.is_empty() {
            bail!("no search method given");
        }
        if self.runs == 0 || self.jobs == 0 || self.max_sims == 0 || self.control_points == 0 {
            bail!("runs, jobs, max_sims and control_points must be positive");
        }
        if !(self.time_limit > 0.0) {
            bail!("time limit must be positive");
        }
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            bail!("seed must be at most {}", i64::MAX);
        }
        Ok(())
    }

    /// Search settings for one run of `method` with generator seed `seed`.
    pub fn search_config(&self, method: Method, seed: u64) -> SearchConfig {
        SearchConfig {
            method,
            seed,
            max_sims: self.max_sims,
            time_limit: self.time_limit,
            stall_trigger: self.stall_trigger,
            c_max: self.c_max,
            control_points: self.control_points,
            sa: SaParams {
                init_temp_factor: self.sa.init_temp_factor,
                cooling: self.sa.cooling,
                proposal_scale: self.sa.proposal_scale,
            },
            local: self.local_options(),
            w_init: self.w_init,
        }
    }

    pub fn local_options(&self) -> LocalSearchOptions {
        LocalSearchOptions {
            h0: self.local.h0,
            c: self.local.c,
            max_iters: self.local.max_iters,
            tol_d: self.local.tol_d,
            tol_x: self.local.tol_x,
            num_lin_samples: self.local.num_lin_samples,
        }
    }

    /// Requirement text from `spec` or `spec_file`, falling back to the model default.
    pub fn spec_text(&self, model_default: &str) -> Result<String> {
        if let Some(s) = &self.spec {
            return Ok(s.clone());
        }
        if let Some(p) = &self.spec_file {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading spec file {}", p.display()))?;
            return Ok(text.trim().to_string());
        }
        Ok(model_default.to_string())
    }

    /// Copy with file references made absolute, as written next to outputs.
    pub fn resolved(&self) -> Result<Self> {
        let abs = |p: &Option<PathBuf>| -> Result<Option<PathBuf>> {
            p.as_ref()
                .map(|p| std::path::absolute(p).with_context(|| format!("resolving {}", p.display())))
                .transpose()
        };
        Ok(Self {
            model_file: abs(&self.model_file)?,
            spec_file: abs(&self.spec_file)?,
            out: std::path::absolute(&self.out)?,
            ..self.clone()
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        match self.out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }

    /// Aggregate CSV path: `<stem>_summary.csv` beside the result CSV.
    pub fn summary_path(&self) -> PathBuf {
        let stem = self.out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        self.out_dir().join(format!("{stem}_summary.csv"))
    }
}
