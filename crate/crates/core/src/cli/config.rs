use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::envs::{GridHazardEnv, PointHazard2DEnv};
use crate::error::{Error, Result};
use crate::oracle::Convention;

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "FCSRL_OUTPUT_DIR";
/// `env_logger` filter, e.g. `info` or `fcsrl=debug`.
pub const LOG_ENV: &str = "FCSRL_LOG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    PointHazard(PointHazard2DEnv),
    GridHazard(GridHazardEnv),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::PointHazard(PointHazard2DEnv::default())
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::PointHazard(e) => e.validate(),
            EnvConfig::GridHazard(e) => e.validate(),
        }
    }

    /// The continuous-action task, which every learning command needs.
    pub fn point(&self) -> Result<&PointHazard2DEnv> {
        match self {
            EnvConfig::PointHazard(e) => Ok(e),
            EnvConfig::GridHazard(_) => Err(Error::Config("this command needs env.kind = \"point_hazard\"".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub seed: u64,
    /// Random drift gridworlds per discount for the survival-bound check.
    pub bound_instances: usize,
    pub bound_gammas: Vec<f64>,
    /// Tallest drift gridworld; its height is also the horizon.
    pub bound_max_height: usize,
    pub contraction_applications: usize,
    pub audit_trajectories: usize,
    pub audit_max_len: usize,
    pub audit_gamma: f64,
    pub two_hot_samples: usize,
    /// Replaces the discount inside the feasibility operator of the
    /// contraction check. Only useful to exercise the failure path.
    pub op_gamma: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bound_instances: 5,
            bound_gammas: vec![0.99, 0.999],
            bound_max_height: 6,
            contraction_applications: 100,
            audit_trajectories: 1000,
            audit_max_len: 50,
            audit_gamma: 0.99,
            two_hot_samples: 1000,
            op_gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub landscape_resolution: usize,
    pub smoothness_trajectories: usize,
    pub smoothness_max_len: usize,
    pub probe_episodes: usize,
    /// Noise of the goal-seeking policy that collects probe states.
    pub probe_noise: f64,
    pub probe_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            landscape_resolution: 50,
            smoothness_trajectories: 1000,
            smoothness_max_len: 50,
            probe_episodes: 40,
            probe_noise: 0.6,
            probe_seed: 7,
        }
    }
}

/// Everything a run needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Estimator convention of the smoothness audits.
    pub convention: Convention,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            seeds: vec![0],
            convention: Convention::Appendix,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            oracle: OracleConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

const TOP_LEVEL: [&str; 7] = ["output_dir", "seeds", "convention", "env", "train", "oracle", "analysis"];

impl RunConfig {
    /// Reads `path` (defaults when `None`), applies `key=value` overrides and
    /// the output-directory variable, then validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::NotFound {
                        what: "config",
                        path: p.to_path_buf(),
                    });
                }
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg = Self::from_table(table)?;
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                cfg.output_dir = PathBuf::from(dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Deserialises a merged table; an `[env]` table without `kind` means
    /// the point-mass task.
    pub fn from_table(mut table: toml::Table) -> Result<Self> {
        if let Some(toml::Value::Table(env)) = table.get_mut("env") {
            env.entry("kind").or_insert_with(|| toml::Value::String("point_hazard".into()));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(Error::Config(m)) = self.train.validate() {
            bad.push(m);
        }
        if let Err(e) = self.env.validate() {
            bad.push(format!("env: {e}"));
        }
        if self.seeds.is_empty() {
            bad.push("seeds must not be empty".into());
        }
        let o = &self.oracle;
        if o.bound_gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) || !(o.audit_gamma > 0.0 && o.audit_gamma < 1.0) {
            bad.push("oracle discounts must lie in (0, 1)".into());
        }
        if o.bound_max_height < 2 || o.bound_max_height > 20 {
            bad.push(format!("oracle.bound_max_height must lie in [2, 20], got {}", o.bound_max_height));
        }
        if o.audit_max_len == 0 {
            bad.push("oracle.audit_max_len must be positive".into());
        }
        let a = &self.analysis;
        if a.landscape_resolution == 0 || a.smoothness_max_len == 0 {
            bad.push("analysis resolution and lengths must be positive".into());
        }
        if !(a.probe_noise > 0.0) {
            bad.push(format!("analysis.probe_noise must be positive, got {}", a.probe_noise));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// `a.b.c=value`, where `value` is read as a TOML value and falls back to a
/// bare string. Keys outside the top-level sections are taken as
/// `train.<key>`.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let mut path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    if !TOP_LEVEL.contains(&path[0]) {
        path.insert(0, "train");
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
