use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressor::{CompressorKind, CompressorSpec};

pub const DEFAULT_EPOCHS: usize = 20;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config field `{field}`: {constraint}")]
    Invalid { field: String, constraint: String },
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        constraint: constraint.into(),
    }
}

/// Cocoercivity level of an experiment scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Low,
    Mid,
    High,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Low, Scenario::Mid, Scenario::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Low => "low",
            Scenario::Mid => "mid",
            Scenario::High => "high",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(Scenario::Low),
            "mid" => Ok(Scenario::Mid),
            "high" => Ok(Scenario::High),
            other => Err(format!(
                "unknown scenario `{other}` (expected low, mid or high)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSettings {
    pub n: usize,
    pub d_half: usize,
    pub lambda: f64,
    /// Target cocoercivity constant per scenario.
    pub target_ell: BTreeMap<Scenario, f64>,
    pub problem_seed: u64,
}

impl ProblemSettings {
    pub fn dim(&self) -> usize {
        2 * self.d_half
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub compressor: CompressorKind,
    /// Fixed step size; derived from the problem constants when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Fixed epoch length; derived when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_iters: Option<usize>,
}

/// Experiment sweep. Every run starts from the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSettings,
    pub methods: Vec<MethodConfig>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Per-scenario replacement for `epochs`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub epochs_per_scenario: BTreeMap<Scenario, usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parses and validates a JSON experiment config.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.n == 0 {
            return Err(invalid("problem.n", "must be at least 1"));
        }
        if p.d_half == 0 {
            return Err(invalid("problem.d_half", "must be at least 1"));
        }
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            return Err(invalid("problem.lambda", "must be positive and finite"));
        }
        if p.target_ell.is_empty() {
            return Err(invalid(
                "problem.target_ell",
                "must name at least one scenario",
            ));
        }
        for (s, &ell) in &p.target_ell {
            if !(ell > p.lambda && ell.is_finite()) {
                return Err(invalid(
                    format!("problem.target_ell.{s}"),
                    format!("must be finite and exceed lambda ({})", p.lambda),
                ));
            }
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required"));
        }
        let mut names = HashSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            if m.name.trim().is_empty() {
                return Err(invalid(format!("methods[{i}].name"), "must be non-empty"));
            }
            if !names.insert(m.name.as_str()) {
                return Err(invalid(
                    format!("methods[{i}].name"),
                    format!("duplicate method name `{}`", m.name),
                ));
            }
            CompressorSpec::new(m.compressor, p.dim()).map_err(|e| {
                invalid(
                    format!("methods[{i}].compressor"),
                    format!("{e} (d = 2·d_half = {})", p.dim()),
                )
            })?;
            if let Some(g) = m.gamma {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(invalid(
                        format!("methods[{i}].gamma"),
                        "must be positive and finite",
                    ));
                }
            }
            if m.inner_iters == Some(0) {
                return Err(invalid(
                    format!("methods[{i}].inner_iters"),
                    "must be at least 1",
                ));
            }
        }
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be at least 1"));
        }
        for (s, &e) in &self.epochs_per_scenario {
            if e == 0 {
                return Err(invalid(
                    format!("epochs_per_scenario.{s}"),
                    "must be at least 1",
                ));
            }
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut seen = HashSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(invalid("seeds", format!("duplicate seed {s}")));
            }
        }
        Ok(())
    }

    pub fn epochs_for(&self, scenario: Scenario) -> usize {
        self.epochs_per_scenario
            .get(&scenario)
            .copied()
            .unwrap_or(self.epochs)
    }

    /// Scenarios present in the config, in low → high order.
    pub fn scenarios(&self) -> Vec<Scenario> {
        self.problem.target_ell.keys().copied().collect()
    }

    /// Keeps the first `count` seeds, extending with consecutive integers
    /// after the largest seed when `count` exceeds the list.
    pub fn with_seed_count(mut self, count: usize) -> Result<Self, ConfigError> {
        if count == 0 {
            return Err(invalid("--seeds", "must be at least 1"));
        }
        if count <= self.seeds.len() {
            self.seeds.truncate(count);
        } else {
            let mut next = self.seeds.iter().copied().max().unwrap_or(0);
            while self.seeds.len() < count {
                next += 1;
                self.seeds.push(next);
            }
        }
        Ok(self)
    }
}
