use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use robust_dde::laser::PhaseConvention;
use robust_dde::robust::Mode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    #[default]
    Hayes,
    ScalarFold,
    Laser,
}

/// Everything a run depends on. Loaded from `--config`, then overridden by
/// flags and environment variables; unset analysis fields are filled with
/// model defaults before the run so the manifest is complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelName,
    pub hayes: HayesOptions,
    pub laser: LaserOptions,
    /// Overrides of parameter metadata keyed by parameter name.
    pub params: BTreeMap<String, ParamOverride>,
    pub analysis: Analysis,
    /// Not part of the config hash.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HayesOptions {
    pub tau: f64,
}

impl Default for HayesOptions {
    fn default() -> Self {
        HayesOptions { tau: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserOptions {
    #[serde(rename = "K")]
    pub k: usize,
    pub phase: PhaseConvention,
}

impl Default for LaserOptions {
    fn default() -> Self {
        LaserOptions {
            k: 31,
            phase: PhaseConvention::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizable: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analysis {
    /// Decay-rate target; 0 tracks plain fold/Hopf manifolds.
    pub sigma: f64,
    /// Starting Chebyshev order of the spectrum discretization.
    pub order: usize,
    /// `fold` or `hopf` (the modified variant follows from `sigma`).
    pub kind: Option<String>,
    /// Parameter walked from the nominal point to find the first crossing.
    pub ray: Option<String>,
    pub ray_dir: f64,
    pub plane: Option<[String; 2]>,
    pub steps: usize,
    /// Arclength step in scaled parameters.
    pub arc_step: f64,
    pub mode: Mode,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub perturb_factor: f64,
    /// Added to the perturbed components after scaling.
    pub perturb_offset: Option<f64>,
    pub perturb_components: Option<Vec<usize>>,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            sigma: 0.0,
            order: 20,
            kind: None,
            ray: None,
            ray_dir: 1.0,
            plane: None,
            steps: 400,
            arc_step: 0.1,
            mode: Mode::Robust,
            dt: None,
            t_end: None,
            perturb_factor: 0.5,
            perturb_offset: None,
            perturb_components: None,
        }
    }
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

/// Reads either a plain config or a manifest written by an earlier run.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
    if value.get("manifest_version").is_some() {
        let m: Manifest = serde_json::from_value(value).map_err(bad)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported manifest version {}",
                m.manifest_version
            )));
        }
        Ok(m.config)
    } else {
        serde_json::from_value(value).map_err(bad)
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON of everything except the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn set_nominal(&mut self, name: &str, value: f64) {
        self.params.entry(name.to_string()).or_default().nominal = Some(value);
    }
}

/// Parses `name=value`.
pub fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad value in '{s}': {e}"))?;
    Ok((name.trim().to_string(), v))
}
