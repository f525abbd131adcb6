//! Experiment configuration files (JSON or TOML). A config plus a master
//! seed fully determines every output byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bbmlab_core::ModelConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Thm1WaveMatch,
    Thm2Asymptotic,
    PropIcScaling,
    CoalescentCompare,
    SurvivalCurve,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Thm1WaveMatch => "thm1_wave_match",
            ExperimentKind::Thm2Asymptotic => "thm2_asymptotic",
            ExperimentKind::PropIcScaling => "prop_ic_scaling",
            ExperimentKind::CoalescentCompare => "coalescent_compare",
            ExperimentKind::SurvivalCurve => "survival_curve",
        }
    }
}

/// Monte Carlo settings shared by the survival-based experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub replicas: usize,
    pub horizon: f64,
    pub pop_cap: usize,
    pub z_threshold: Option<f64>,
    pub dt: Option<f64>,
    pub decided_floor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replicas: 10_000,
            horizon: 100.0,
            pop_cap: bbmlab_core::engine::DEFAULT_POP_CAP,
            z_threshold: None,
            dt: None,
            decided_floor: 0.5,
        }
    }
}

impl McConfig {
    pub fn settings(&self) -> bbmlab_core::engine::McSettings {
        bbmlab_core::engine::McSettings {
            replicas: self.replicas,
            horizon: self.horizon,
            pop_cap: self.pop_cap,
            z_threshold: self.z_threshold,
            dt: self.dt,
            decided_floor: self.decided_floor,
        }
    }
}

fn default_alpha_grid() -> Vec<f64> {
    vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
}

fn default_epsilon_list() -> Vec<f64> {
    vec![1.0, 0.5]
}

/// θ-vs-MC matching over an α-grid, one fitted shift per ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thm1Config {
    pub alpha_grid: Vec<f64>,
    pub epsilon_list: Vec<f64>,
    /// Far endpoints checked against survival → {0, 1}.
    pub endpoint_alphas: Vec<f64>,
    pub endpoint_replicas: usize,
}

impl Default for Thm1Config {
    fn default() -> Self {
        Thm1Config {
            alpha_grid: default_alpha_grid(),
            epsilon_list: default_epsilon_list(),
            endpoint_alphas: vec![-8.0, 8.0],
            endpoint_replicas: 2_000,
        }
    }
}

/// Survival-shape ratio over an interior x-grid (fractions of L).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thm2Config {
    pub x_grid_rel: Vec<f64>,
}

impl Default for Thm2Config {
    fn default() -> Self {
        Thm2Config { x_grid_rel: vec![0.3, 0.4, 0.5, 0.6, 0.7] }
    }
}

/// Functional scaling at `t = c L²` from one particle at `L + α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropIcConfig {
    pub c: f64,
    pub alpha: f64,
    pub epsilon_list: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub replicas: usize,
    pub dt: Option<f64>,
    pub pop_cap: usize,
}

impl Default for PropIcConfig {
    fn default() -> Self {
        PropIcConfig {
            c: 1.0,
            alpha: 0.0,
            epsilon_list: vec![1.0, 0.5, 0.3],
            lambda_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            replicas: 400,
            dt: Some(2e-3),
            pop_cap: bbmlab_core::engine::DEFAULT_POP_CAP,
        }
    }
}

/// Genealogical partitions against the Bolthausen-Sznitman reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoalescentConfig {
    pub n: usize,
    /// Coalescent-clock horizon `T`; physical horizon is `T ε^{−3/2}`.
    pub t_horizon: f64,
    pub alpha: f64,
    pub s_grid: Vec<f64>,
    pub replicas: usize,
    pub bs_replicas: usize,
    /// `None`: `1/(π²√2)`.
    pub time_rescale: Option<f64>,
    pub dt: Option<f64>,
    pub pop_cap: usize,
}

impl Default for CoalescentConfig {
    fn default() -> Self {
        CoalescentConfig {
            n: 4,
            t_horizon: 2.0,
            alpha: 4.0,
            s_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            replicas: 200,
            bs_replicas: 4_000,
            time_rescale: None,
            dt: Some(1e-3),
            pop_cap: bbmlab_core::engine::DEFAULT_POP_CAP,
        }
    }
}

/// Plain survival-probability curve over absolute starting points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurvivalConfig {
    pub x_grid: Vec<f64>,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        SurvivalConfig { x_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5] }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub thm1: Thm1Config,
    #[serde(default)]
    pub thm2: Thm2Config,
    #[serde(default)]
    pub prop_ic: PropIcConfig,
    #[serde(default)]
    pub coalescent: CoalescentConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("bad JSON config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("bad TOML config: {e}")))
    }

    /// SHA-256 of the canonical JSON form. The output directory is not part
    /// of the experiment's identity and is excluded.
    pub fn hash(&self) -> String {
        let mut canonical_form = self.clone();
        canonical_form.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&canonical_form).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for b in digest.iter().take(8) {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"thm2_asymptotic\"\n[model]\nepsilon = 0.5\nmaster_seed = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Thm2Asymptotic);
        assert_eq!(cfg.mc.replicas, 10_000);
        assert_eq!(cfg.thm2.x_grid_rel.len(), 5);
        let (params, seed) = cfg.model.resolve().unwrap();
        assert!((params.epsilon - 0.5).abs() < 1e-15);
        assert_eq!(seed.master_seed, 9);
    }

    #[test]
    fn json_config_and_stable_hash() {
        let text = r#"{"experiment":"survival_curve","model":{"epsilon":1.0},"survival":{"x_grid":[1.0]}}"#;
        let a = ExperimentConfig::from_json(text).unwrap();
        let b = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(a.hash(), b.hash());
        let text2 = r#"{"experiment":"survival_curve","model":{"epsilon":1.0},"survival":{"x_grid":[2.0]}}"#;
        assert_ne!(a.hash(), ExperimentConfig::from_json(text2).unwrap().hash());
    }

    #[test]
    fn experiment_names_match_cli_tokens() {
        for (kind, name) in [
            (ExperimentKind::Thm1WaveMatch, "thm1_wave_match"),
            (ExperimentKind::Thm2Asymptotic, "thm2_asymptotic"),
            (ExperimentKind::PropIcScaling, "prop_ic_scaling"),
            (ExperimentKind::CoalescentCompare, "coalescent_compare"),
            (ExperimentKind::SurvivalCurve, "survival_curve"),
        ] {
            assert_eq!(kind.name(), name);
            let json = format!("\"{name}\"");
            let parsed: ExperimentKind = serde_json::from_str(&json).unwrap();
            assert_eq!(parsed, kind);
        }
    }
}
