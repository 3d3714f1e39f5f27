//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::schedulers::{
    AceConfig, AceScheduler, AshaConfig, AshaScheduler, IntervalMode, NoStoppingScheduler, Scheduler, StoppingMode,
};
use crate::search_space::{ParamSpecDef, SearchSpace};
use crate::sim::{Problem, ProblemSpec, PRESETS};
use crate::trial_history::ConstraintSpec;

use super::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    /// Replaces the preset's search space when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<Vec<ParamSpecDef>>,
    /// Simulated time budget per run.
    pub budget: f64,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub arms: Vec<ArmConfig>,
}

fn default_max_concurrent() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub overrides: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub scheduler: SchedulerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SchedulerConfig {
    Ace(AceArm),
    Asha(AshaArm),
    NoStopping(NoStoppingArm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AceArm {
    #[serde(default = "default_truncation")]
    pub truncation_percentage: f64,
    #[serde(default = "yes")]
    pub low_overhead_gate: bool,
    #[serde(default = "default_stopping")]
    pub stopping_mode: StoppingMode,
    #[serde(default = "default_interval")]
    pub interval_mode: IntervalMode,
}

impl Default for AceArm {
    fn default() -> Self {
        Self {
            truncation_percentage: default_truncation(),
            low_overhead_gate: true,
            stopping_mode: default_stopping(),
            interval_mode: default_interval(),
        }
    }
}

fn default_truncation() -> f64 {
    AceConfig::<f64>::DEFAULT_TRUNCATION
}

fn yes() -> bool {
    true
}

fn default_stopping() -> StoppingMode {
    StoppingMode::Stratum
}

fn default_interval() -> IntervalMode {
    IntervalMode::Adaptive
}

/// How an ASHA arm treats the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AshaConstraintMode {
    /// Ignore it during tuning; scan for a feasible trial afterwards.
    None,
    /// Evaluate once when each trial ends.
    Callback,
    /// Rank within checkpoint groups.
    Stratum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AshaArm {
    #[serde(default = "default_eta")]
    pub reduction_factor: u32,
    #[serde(default = "default_grace")]
    pub grace_period: u32,
    /// Defaults to the largest iteration count in the search space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time_units: Option<u32>,
    #[serde(default = "default_asha_constraint")]
    pub constraint: AshaConstraintMode,
    #[serde(default = "yes")]
    pub constraint_interval_fixed: bool,
}

fn default_eta() -> u32 {
    AshaConfig::<f64>::DEFAULT_REDUCTION_FACTOR
}

fn default_grace() -> u32 {
    AshaConfig::<f64>::DEFAULT_GRACE_PERIOD
}

fn default_asha_constraint() -> AshaConstraintMode {
    AshaConstraintMode::None
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoStoppingArm {
    #[serde(default)]
    pub constraint_callback: bool,
}

impl SchedulerConfig {
    /// Checks parameter domains; errors name the offending key.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |key: &str, msg: String| Err((key.to_owned(), msg));
        match self {
            Self::Ace(a) => {
                let p = a.truncation_percentage;
                if !(p > 0.0 && p < 1.0) {
                    return bad("truncation_percentage", format!("must lie in (0, 1), got {p}"));
                }
            }
            Self::Asha(a) => {
                if a.reduction_factor < 2 {
                    return bad(
                        "reduction_factor",
                        format!("must be at least 2, got {}", a.reduction_factor),
                    );
                }
                if a.grace_period < 1 {
                    return bad("grace_period", "must be at least 1".into());
                }
                if let Some(max) = a.max_time_units {
                    if max < a.grace_period {
                        return bad("max_time_units", format!("must be at least grace_period, got {max}"));
                    }
                }
            }
            Self::NoStopping(_) => {}
        }
        Ok(())
    }

    /// Builds a fresh scheduler for one run.
    pub fn build(
        &self,
        name: &str,
        constraint: ConstraintSpec<f64>,
        max_iterations: u32,
    ) -> Result<Box<dyn Scheduler<f64>>, String> {
        Ok(match self {
            Self::Ace(a) => {
                let config = AceConfig::new(constraint)
                    .truncation(a.truncation_percentage)
                    .gate(a.low_overhead_gate)
                    .stopping(a.stopping_mode)
                    .interval(a.interval_mode);
                Box::new(AceScheduler::new(config)?.with_name(name))
            }
            Self::Asha(a) => {
                let mut config = AshaConfig::new(a.max_time_units.unwrap_or(max_iterations));
                config.reduction_factor = a.reduction_factor;
                config.grace_period = a.grace_period;
                let config = match a.constraint {
                    AshaConstraintMode::None => config,
                    AshaConstraintMode::Callback => config.with_callback(constraint),
                    AshaConstraintMode::Stratum => config.with_stratum(constraint, a.constraint_interval_fixed),
                };
                Box::new(AshaScheduler::new(config)?.with_name(name))
            }
            Self::NoStopping(a) => Box::new(NoStoppingScheduler::new(a.constraint_callback).with_name(name)),
        })
    }
}

impl ExperimentConfig {
    /// Parses a config document. Errors carry the path of the offending key.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ExperimentError::Config {
                key: path,
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |key: &str, message: String| {
            Err(ExperimentError::Config {
                key: key.to_owned(),
                message,
            })
        };
        if !PRESETS.contains(&self.problem.preset.as_str()) {
            return fail(
                "problem.preset",
                format!("unknown preset `{}`, expected one of {PRESETS:?}", self.problem.preset),
            );
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return fail("budget", format!("must be positive, got {}", self.budget));
        }
        if self.max_concurrent == 0 {
            return fail("max_concurrent", "must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required".into());
        }
        if self.arms.is_empty() {
            return fail("arms", "at least one arm is required".into());
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.name.is_empty() || !arm.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return fail(
                    &format!("arms[{i}].name"),
                    format!(
                        "`{}` must be non-empty and use only letters, digits, `-`, `_` or `.`",
                        arm.name
                    ),
                );
            }
            if self.arms[..i].iter().any(|a| a.name == arm.name) {
                return fail(&format!("arms[{i}].name"), format!("duplicate arm name `{}`", arm.name));
            }
            if let Err((key, message)) = arm.scheduler.validate() {
                return fail(&format!("arms[{i}].scheduler.{key}"), message);
            }
        }
        self.problem().map(|_| ())
    }

    /// The configured problem: preset, overrides and search space.
    pub fn problem(&self) -> Result<Problem, ExperimentError> {
        let fail = |key: &str, message: String| ExperimentError::Config {
            key: key.to_owned(),
            message,
        };
        let preset = self.problem.preset.as_str();
        let spec =
            ProblemSpec::preset(preset).ok_or_else(|| fail("problem.preset", format!("unknown preset `{preset}`")))?;
        let spec = spec
            .with_overrides(&self.problem.overrides)
            .map_err(|e| fail("problem.overrides", e.to_string()))?;
        let space = match &self.search_space {
            Some(defs) => SearchSpace::from_defs(defs).map_err(|e| fail("search_space", e.to_string()))?,
            None => ProblemSpec::preset_space(preset).expect("every preset has a space"),
        };
        Problem::new(spec, space).map_err(|e| fail("problem", e.to_string()))
    }
}
