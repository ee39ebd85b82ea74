//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::SolverParams;
use crate::graph::{GraphSpec, MetricGraph};
use crate::model::{Nonlinearity, Potential, PowerTerm};
use crate::nehari::NehariOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("at `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Graph presets with parameter overrides, or an explicit description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Interval { length: f64 },
    Star { legs: usize, truncation_length: f64 },
    Tadpole { loop_length: f64, truncation_length: f64 },
    Custom { spec: GraphSpec },
}

impl GraphConfig {
    pub fn spec(&self) -> GraphSpec {
        match self {
            GraphConfig::Interval { length } => GraphSpec::interval(*length),
            GraphConfig::Star { legs, truncation_length } => GraphSpec::star(*legs, *truncation_length),
            GraphConfig::Tadpole { loop_length, truncation_length } => GraphSpec::tadpole(*loop_length, *truncation_length),
            GraphConfig::Custom { spec } => spec.clone(),
        }
    }

    pub fn build(&self) -> Result<MetricGraph, crate::graph::GraphError> {
        crate::graph::build_graph(&self.spec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    PurePower { exponent: f64 },
    PowerSum { terms: Vec<PowerTerm> },
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig::PurePower { exponent: 4.0 }
    }
}

impl NonlinearityConfig {
    pub fn build(&self) -> Nonlinearity {
        match self {
            NonlinearityConfig::PurePower { exponent } => Nonlinearity::pure_power(*exponent),
            NonlinearityConfig::PowerSum { terms } => Nonlinearity::power_sum(terms.clone()),
        }
    }
}

/// Optional overrides of the barycenter radii.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarycenterOverrides {
    pub r0: Option<f64>,
    pub rho0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Frequency for `ground`.
    pub lambda: f64,
    /// Grid for `dcurve`.
    pub lambdas: Vec<f64>,
    /// Descending scales for `ceps` and `concentrate`.
    pub eps: Vec<f64>,
    /// Compute `d` at the potential's minimum and at infinity alongside
    /// `ceps` and `concentrate`.
    pub reference_levels: bool,
    /// Graph for those autonomous reference levels (the main graph if absent).
    pub reference_graph: Option<GraphConfig>,
    /// Number of eigenvalues written by `spectrum` (all if absent).
    pub spectrum_count: Option<usize>,
    pub svg: bool,
    pub verify_samples: usize,
    pub verify_seed: u64,
    pub output: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            lambda: 0.0,
            lambdas: vec![-0.5, -0.25, 0.0, 0.25, 0.5],
            eps: vec![0.4, 0.2, 0.1],
            reference_levels: true,
            reference_graph: None,
            spectrum_count: None,
            svg: true,
            verify_samples: 100_000,
            verify_seed: 2024,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    pub solver: SolverParams,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub potential: Option<Potential>,
    #[serde(default)]
    pub nehari: NehariOptions,
    #[serde(default)]
    pub barycenter: BarycenterOverrides,
    #[serde(default)]
    pub run: RunOptions,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let syntax = |e: toml::de::Error| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Syntax { line, column, message: e.message().to_string() }
        };
        let de = toml::Deserializer::parse(text).map_err(syntax)?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = match inner.span() {
                Some(s) => {
                    let (line, column) = line_col(text, s.start);
                    format!("{} (line {line}, column {column})", inner.message())
                }
                None => inner.message().to_string(),
            };
            ConfigError::Field { path, message }
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    /// Range checks that need no discretization.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.solver.validate().map_err(|e| ConfigError::Invalid(format!("solver: {e}")))?;
        let mc2 = self.solver.mc2();
        if self.run.lambda.abs() >= mc2 {
            return Err(ConfigError::Invalid(format!("run.lambda = {} is outside the gap (-{mc2}, {mc2})", self.run.lambda)));
        }
        if let Some(l) = self.run.lambdas.iter().find(|l| l.abs() >= mc2) {
            return Err(ConfigError::Invalid(format!("run.lambdas contains {l}, outside the gap")));
        }
        if self.run.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(ConfigError::Invalid("run.eps must be positive".into()));
        }
        if self.run.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Invalid("run.eps must be strictly decreasing".into()));
        }
        if self.nehari.multistart == 0 {
            return Err(ConfigError::Invalid("nehari.multistart must be at least 1".into()));
        }
        Ok(())
    }
}
