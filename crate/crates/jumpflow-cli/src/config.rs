//! Experiment configuration: one TOML file per run.
//!
//! The file has a fixed top-level shape (`task`, `output`, `[system]`,
//! `[levy]`, `[sim]`) plus a `[task_params]` table whose schema depends on
//! `task`. The params table is decoded in a second pass so that error
//! messages keep the full field path (`task_params.points[2]`, ...).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    CheckUh,
    MalliavinScan,
    ReversalCheck,
    ApplyOperator,
    Semigroup,
    Density,
    Duhamel,
    GeneratorCheck,
    GradientScan,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::CheckUh => "check-uh",
            Task::MalliavinScan => "malliavin-scan",
            Task::ReversalCheck => "reversal-check",
            Task::ApplyOperator => "apply-operator",
            Task::Semigroup => "semigroup",
            Task::Density => "density",
            Task::Duhamel => "duhamel",
            Task::GeneratorCheck => "generator-check",
            Task::GradientScan => "gradient-scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `σ = S z`, `b = 0`; needs `matrix`.
    Constant,
    Additive,
    /// `σ = z`, `b = A x`; needs `matrix`.
    Linear,
    Kinetic,
    Multiplicative,
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub family: Family,
    /// State dimension; fixed to 2 for `kinetic` and 1 for the scalar
    /// families.
    pub dim: usize,
    /// Row-major `d×d` matrix for `constant` and `linear`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
    /// Noise scale `s` (multiplicative, sine).
    #[serde(default = "default_s")]
    pub s: f64,
    /// Drift parameter: `r` (multiplicative, default 0.5), `a` (sine,
    /// default 0.5), drift scale (kinetic, default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
}

fn default_s() -> f64 {
    0.4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    Smooth,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    pub alpha: f64,
    pub delta: f64,
    #[serde(default = "default_profile")]
    pub profile: ProfileName,
    /// Support radius of the hard cutoff; defaults to `δ/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Lower jump truncation; the model default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc_low: Option<f64>,
    /// Switch the noise off entirely.
    #[serde(default)]
    pub silent: bool,
}

fn default_profile() -> ProfileName {
    ProfileName::Smooth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt_max: f64,
    #[serde(default)]
    pub big_jumps: bool,
}

fn default_dt() -> f64 {
    jumpflow::flow::DEFAULT_DT_MAX
}

impl SimSection {
    pub fn to_sim(&self) -> jumpflow::flow::SimConfig {
        jumpflow::flow::SimConfig::new(self.t_end, self.n_paths, self.seed)
            .with_dt_max(self.dt_max)
            .with_big_jumps(self.big_jumps)
    }
}

/// The parsed file. `task_params` stays a raw table until the task decodes
/// it with [`ExperimentConfig::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub system: SystemConfig,
    pub levy: LevyConfig,
    pub sim: SimSection,
    #[serde(default)]
    pub task_params: toml::Table,
}

fn path_error<E: std::fmt::Display>(prefix: &str, e: serde_path_to_error::Error<E>) -> CliError {
    let path = e.path().to_string();
    let full = match (prefix.is_empty(), path == ".") {
        (true, _) => path,
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    };
    CliError::Validation(format!("{full}: {}", e.into_inner()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Validation(format!("malformed config: {e}")))?;
        serde_path_to_error::deserialize(de).map_err(|e| path_error("", e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Decodes `task_params` into the task's schema.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, CliError> {
        let value = toml::Value::Table(self.task_params.clone());
        serde_path_to_error::deserialize(value).map_err(|e| path_error("task_params", e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    /// SHA-256 of the canonical JSON rendering: fields in declaration order,
    /// params keys sorted, floats in shortest round-trip decimal form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config is representable in JSON");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A named test function; `k`, `center` etc. have length `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    Linear { v: Vec<f64> },
    /// `xᵀQx` with row-major `q`.
    Quadratic { q: Vec<f64> },
    Cos { k: Vec<f64> },
    Tanh { k: Vec<f64> },
    Gaussian { center: Vec<f64>, width: f64 },
    Bump { center: Vec<f64>, radius: f64 },
    SmoothStep { coord: usize, at: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: f64,
}

/// One axis of a tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AxisSpec {
    Uniform { lo: f64, hi: f64, n: usize },
    /// `n` points on `[-half, half]`, dense within `core` of the origin.
    Stretched { half: f64, core: f64, n: usize },
    Points { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolutionName {
    Fine,
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorName {
    SmallJump,
    BigJump,
    Full,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub jacobians: bool,
    /// Write every path as one JSON line (keep `n_paths` small).
    #[serde(default)]
    pub dump_paths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConventionName {
    NablaBLeft,
    BNablaRight,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckUhParams {
    pub j0: usize,
    pub grid: BoxGrid,
    #[serde(default = "default_convention")]
    pub convention: ConventionName,
}

fn default_convention() -> ConventionName {
    ConventionName::NablaBLeft
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceName {
    JumpWeighted,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalliavinScanParams {
    pub x0: Vec<f64>,
    pub u: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_covariance")]
    pub covariance: CovarianceName,
}

fn default_covariance() -> CovarianceName {
    CovarianceName::JumpWeighted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Reduced,
    Full,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReversalParams {
    pub x0: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
}

fn default_mode() -> ModeName {
    ModeName::Reduced
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplyOperatorParams {
    pub operator: OperatorName,
    pub function: FunctionSpec,
    pub grid: BoxGrid,
    #[serde(default)]
    pub pv_inner_cut: Option<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: ResolutionName,
}

fn default_resolution() -> ResolutionName {
    ResolutionName::Fine
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupParams {
    pub function: FunctionSpec,
    pub t: f64,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityParams {
    pub t: f64,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub axes: Option<Vec<AxisSpec>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuhamelParams {
    pub function: FunctionSpec,
    pub t: f64,
    pub points: Vec<Vec<f64>>,
    pub time_nodes: usize,
    pub axes: Vec<AxisSpec>,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_resolution")]
    pub resolution: ResolutionName,
    /// Run the `ℒ ≡ 0` degenerate case.
    #[serde(default)]
    pub no_big_jumps: bool,
}

fn default_batches() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub function: FunctionSpec,
    pub t: f64,
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_resolution")]
    pub resolution: ResolutionName,
    /// Include the big-jump operator and simulate big jumps.
    #[serde(default = "default_true")]
    pub full: bool,
}

fn default_h() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientParams {
    pub function: FunctionSpec,
    pub times: Vec<f64>,
    pub order: usize,
    pub points: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
task = "semigroup"

[system]
family = "additive"
dim = 1

[levy]
alpha = 1.0
delta = 1.0
trunc_low = 0.01

[sim]
t_end = 0.5
n_paths = 100
seed = 7

[task_params]
t = 0.5
points = [[0.0], [0.5]]
function = { kind = "cos", k = [1.0] }
"#;

    #[test]
    fn parses_and_decodes_params() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.task, Task::Semigroup);
        let p: SemigroupParams = c.params().unwrap();
        assert_eq!(p.points.len(), 2);
        assert_eq!(p.function, FunctionSpec::Cos { k: vec![1.0] });
        assert_eq!(c.sim.dt_max, 1e-3);
    }

    #[test]
    fn missing_field_reports_path() {
        let text = BASE.replace("family = \"additive\"\n", "");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("system") && msg.contains("family"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn params_error_reports_nested_path() {
        let text = BASE.replace("points = [[0.0], [0.5]]", "points = [[0.0], [\"x\"]]");
        let c = ExperimentConfig::parse(&text).unwrap();
        let e = c.params::<SemigroupParams>().unwrap_err().to_string();
        assert!(e.contains("task_params.points[1][0]"), "{e}");
    }

    #[test]
    fn round_trip_and_stable_hash() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let mut other = c.clone();
        other.sim.seed = 8;
        assert_ne!(c.hash(), other.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn float_rendering_round_trips_bits() {
        let mut c = ExperimentConfig::parse(BASE).unwrap();
        c.levy.alpha = 0.1 + 0.2;
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again.levy.alpha.to_bits(), c.levy.alpha.to_bits());
    }

    #[test]
    fn unknown_task_is_rejected() {
        let e = ExperimentConfig::parse(&BASE.replace("\"semigroup\"", "\"nope\"")).unwrap_err();
        assert!(e.to_string().starts_with("task"), "{e}");
    }
}
