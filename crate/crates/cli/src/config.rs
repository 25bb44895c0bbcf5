//! Experiment configuration: a JSON document plus command-line overrides.
//!
//! Every field has a default, so `{}` is a valid configuration. Unknown fields
//! are rejected.
//!
//! ```json
//! {
//!   "problem":   { "kind": "conditioned_quadratic", "dim": 50, "n": 100,
//!                  "condition": 1e4, "radius": 1.0, "seed": 0 },
//!   "schedule":  { "kind": "piecewise_linear", "level": 1.0, "path": null },
//!   "optimizer": { "policies": ["constant", "idealized", "adaptive", "variance_adaptive"],
//!                  "c": null, "m": null, "beta": null, "p": 2.0, "window": null,
//!                  "m_coeff": 2.0, "bound_const": 32, "noise_mode": "second_moment_proxy" },
//!   "horizons": [1000], "alphas": [0.5], "seeds": [0, 1, 2],
//!   "out": "out", "trajectories": false, "timing": false
//! }
//! ```

use std::path::{Path, PathBuf};

use nonstat_core::analysis::BoundConstant;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Gaussian-design linear regression.
    Quadratic,
    /// Linear regression with a log-spaced Hessian spectrum.
    ConditionedQuadratic,
    /// `Σ x_i²/(1 + x_i²)`.
    Nonconvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    pub n: usize,
    pub condition: f64,
    pub radius: f64,
    pub seed: u64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { kind: ProblemKind::ConditionedQuadratic, dim: 50, n: 100, condition: 1e4, radius: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKindSpec {
    Constant,
    PiecewiseLinear,
    AdversarialSpike,
    /// Levels read from `path`; its length fixes `T`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub kind: ScheduleKindSpec,
    /// Level of the constant schedule.
    pub level: f64,
    pub path: Option<PathBuf>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { kind: ScheduleKindSpec::PiecewiseLinear, level: 1.0, path: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModeSpec {
    VarianceTarget,
    #[default]
    SecondMomentProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub policies: Vec<String>,
    /// Replaces `c` of adaptive rules and the numerator `R` of baselines.
    pub c: Option<f64>,
    pub m: Option<f64>,
    pub beta: Option<f64>,
    pub p: f64,
    pub window: Option<usize>,
    pub m_coeff: f64,
    pub bound_const: u32,
    pub noise_mode: NoiseModeSpec,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            policies: vec!["constant".into(), "idealized".into(), "adaptive".into(), "variance_adaptive".into()],
            c: None,
            m: None,
            beta: None,
            p: 2.0,
            window: None,
            m_coeff: 2.0,
            bound_const: 32,
            noise_mode: NoiseModeSpec::SecondMomentProxy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Constant,
    Idealized,
    Adaptive,
    AdaptiveFirstMoment,
    Window,
    Pnorm,
    VarianceAdaptive,
}

impl PolicyName {
    pub const ALL: [PolicyName; 7] = [
        PolicyName::Constant,
        PolicyName::Idealized,
        PolicyName::Adaptive,
        PolicyName::AdaptiveFirstMoment,
        PolicyName::Window,
        PolicyName::Pnorm,
        PolicyName::VarianceAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Constant => "constant",
            PolicyName::Idealized => "idealized",
            PolicyName::Adaptive => "adaptive",
            PolicyName::AdaptiveFirstMoment => "adaptive_first_moment",
            PolicyName::Window => "window",
            PolicyName::Pnorm => "pnorm",
            PolicyName::VarianceAdaptive => "variance_adaptive",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub schedule: ScheduleSpec,
    pub optimizer: OptimizerSpec,
    pub horizons: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Write `trajectory_<hash>.csv` for every run.
    pub trajectories: bool,
    /// Fill `wall_time_ms`; off by default so output is byte-reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::default(),
            schedule: ScheduleSpec::default(),
            optimizer: OptimizerSpec::default(),
            horizons: vec![1000],
            alphas: vec![0.5],
            seeds: vec![0],
            out: PathBuf::from("out"),
            trajectories: false,
            timing: false,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub num_seeds: Option<u64>,
    pub policies: Option<Vec<String>>,
    pub horizons: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    pub m_coeff: Option<f64>,
    pub bound_const: Option<u32>,
    pub trajectories: bool,
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        match (o.seed, o.num_seeds) {
            (Some(s), Some(n)) => self.seeds = (s..s + n).collect(),
            (Some(s), None) => self.seeds = vec![s],
            (None, Some(n)) => self.seeds = (0..n).collect(),
            (None, None) => {}
        }
        if let Some(p) = &o.policies {
            self.optimizer.policies = p.clone();
        }
        if let Some(h) = &o.horizons {
            self.horizons = h.clone();
        }
        if let Some(a) = &o.alphas {
            self.alphas = a.clone();
        }
        if let Some(m) = o.m_coeff {
            self.optimizer.m_coeff = m;
        }
        if let Some(b) = o.bound_const {
            self.optimizer.bound_const = b;
        }
        self.trajectories |= o.trajectories;
        self.timing |= o.timing;
    }

    pub fn policies(&self) -> Result<Vec<PolicyName>, ConfigError> {
        self.optimizer
            .policies
            .iter()
            .map(|name| PolicyName::parse(name).ok_or_else(|| ConfigError::Invalid(format!("unknown policy `{name}`"))))
            .collect()
    }

    pub fn bound_constant(&self) -> Result<BoundConstant, ConfigError> {
        BoundConstant::from_value(self.optimizer.bound_const).ok_or_else(|| {
            ConfigError::Invalid(format!("bound_const must be 4, 32 or 12, got {}", self.optimizer.bound_const))
        })
    }

    /// Checks every cross-field constraint; called before any run starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let policies = self.policies()?;
        if policies.is_empty() {
            return invalid("no policies selected");
        }
        self.bound_constant()?;
        if self.seeds.is_empty() {
            return invalid("seeds must be nonempty");
        }
        if self.alphas.is_empty() {
            return invalid("alphas must be nonempty");
        }
        if self.horizons.is_empty() && self.schedule.kind != ScheduleKindSpec::Custom {
            return invalid("horizons must be nonempty");
        }
        if let Some(&t) = self.horizons.iter().find(|&&t| t < 3) {
            return invalid(format!("every T must be at least 3, got {t}"));
        }
        if self.schedule.kind == ScheduleKindSpec::PiecewiseLinear && self.horizons.iter().any(|&t| t < 5) {
            return invalid("the piecewise-linear schedule needs T ≥ 5");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return invalid(format!("alpha must be finite and nonnegative, got {a}"));
        }
        if self.schedule.kind == ScheduleKindSpec::Custom && self.schedule.path.is_none() {
            return invalid("custom schedule needs `path`");
        }
        if self.schedule.kind == ScheduleKindSpec::Constant && !(self.schedule.level > 0.0) {
            return invalid("constant schedule level must be positive");
        }
        if !(self.optimizer.m_coeff > 0.0) {
            return invalid("m_coeff must be positive");
        }
        let p = &self.problem;
        if p.dim == 0 {
            return invalid("problem dim must be positive");
        }
        if p.kind != ProblemKind::Nonconvex && p.n < p.dim {
            return invalid("problem n must be at least dim");
        }
        if !(p.radius > 0.0) {
            return invalid("problem radius must be positive");
        }
        if p.kind == ProblemKind::Nonconvex {
            if let Some(bad) = policies
                .iter()
                .find(|n| !matches!(n, PolicyName::Constant | PolicyName::Idealized | PolicyName::VarianceAdaptive))
            {
                return invalid(format!("policy `{}` has no nonconvex variant", bad.as_str()));
            }
        }
        Ok(())
    }
}
