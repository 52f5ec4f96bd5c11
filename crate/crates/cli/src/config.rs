//! Experiment configuration (TOML). See `docs/config.md` for the schema.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub disturbance: Option<DisturbanceConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub check: Option<CheckConfig>,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Registered id, or `inline`.
    pub id: String,
    pub z0: Vec<f64>,
    /// Control grid resolution of a registered system.
    pub control_resolution: Option<usize>,
    /// Label of an inline system (used to look up closed-form targets).
    pub name: Option<String>,
    pub rhs: Option<Vec<String>>,
    pub control: Option<SetConfig>,
    pub disturbance: Option<SetConfig>,
    pub horizon: Option<[f64; 2]>,
    /// Bounding box; 10% margin is added per side.
    pub bounds_lower: Option<Vec<f64>>,
    pub bounds_upper: Option<Vec<f64>>,
    /// Terminal cost expression in `x1..xn`.
    pub cost: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub points: Option<Vec<Vec<f64>>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_steps() -> usize {
    100
}

fn default_substeps() -> usize {
    4
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    /// `ue`, `ubar`, `ustar`, `explicit` or `constant`.
    pub id: String,
    pub eps: Option<f64>,
    /// Spacing of the control-set net used as test actions by `ue`.
    pub net: Option<f64>,
    pub test_set: Option<Vec<Vec<f64>>>,
    /// Controls the useful control is picked from; `signs` is shorthand for
    /// `{-1, 1}^p`. Defaults to the enumerated control set.
    pub shift_set: Option<ShiftSet>,
    /// Control of the `constant` strategy.
    pub u: Option<Vec<f64>>,
    pub u_star: Option<Vec<f64>>,
    pub v_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSet {
    Named(String),
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// `value-gradient` or `exact`.
    #[serde(default = "default_oracle")]
    pub kind: String,
    pub grid: Option<GridConfig>,
}

fn default_oracle() -> String {
    "value-gradient".into()
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: default_oracle(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_time_steps() -> usize {
    100
}

fn default_nodes() -> usize {
    41
}

/// Open-loop disturbance for `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// `constant`, `pieces` or `random`.
    pub kind: String,
    pub value: Option<Vec<f64>>,
    pub breakpoints: Option<Vec<f64>>,
    pub values: Option<Vec<Vec<f64>>>,
    pub rate: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub index: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub random: Option<RandomConfig>,
    /// Adds every constant disturbance.
    #[serde(default)]
    pub constants: bool,
    /// Explicit open-loop signals.
    #[serde(default)]
    pub signals: Vec<PiecesConfig>,
    /// Adversary modes: `best-response`, `lagged-control`.
    #[serde(default)]
    pub adversary: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub count: usize,
    pub rate: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecesConfig {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// `assumption1`, `assumption2` or `saddle`.
    pub kind: String,
    pub test_set: Option<Vec<Vec<f64>>>,
    pub p_bar: Option<Vec<Vec<f64>>>,
    /// Sampled states: a grid over `[lower, upper]` with `per_axis` points.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Directions `s` for assumption2 and saddle; defaults to the
    /// normalized nonzero vectors of `{-1, 0, 1}^n`.
    pub directions: Option<Vec<Vec<f64>>>,
    pub tol_f: Option<f64>,
    #[serde(default = "default_saddle_tol")]
    pub saddle_tol: f64,
}

fn default_per_axis() -> usize {
    5
}

fn default_times() -> Vec<f64> {
    vec![0.0]
}

fn default_saddle_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub steps: Vec<usize>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub coupled: bool,
    #[serde(default = "default_trend_tol")]
    pub trend_tol: f64,
    #[serde(default = "default_lower_tol")]
    pub lower_tol: f64,
    /// Also estimate the ordered chain of guaranteed results.
    #[serde(default)]
    pub chain: bool,
    #[serde(default = "default_chain_tol")]
    pub chain_tol: f64,
}

fn default_trend_tol() -> f64 {
    0.1
}

fn default_lower_tol() -> f64 {
    0.05
}

fn default_chain_tol() -> f64 {
    0.02
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(r) = self.ensemble.as_mut().and_then(|e| e.random.as_mut()) {
            r.seed = Some(seed);
        }
        if let Some(d) = self.disturbance.as_mut() {
            if d.seed.is_some() || d.kind == "random" {
                d.seed = Some(seed);
            }
        }
    }

    /// SHA-256 of the resolved config in canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
