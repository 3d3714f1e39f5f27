//! Hyperparameter spaces and reproducible random search.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{keyed_rng, tag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("search space is empty")]
    Empty,
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("search space needs exactly one iteration-axis parameter, found {0}")]
    IterationAxis(usize),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
}

fn invalid(name: &str, reason: impl Into<String>) -> SpaceError {
    SpaceError::InvalidParam {
        name: name.to_owned(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    LogUniformReal {
        low: f64,
        high: f64,
    },
    UniformReal {
        low: f64,
        high: f64,
    },
    /// Integers drawn log-uniformly; both bounds inclusive.
    LogUniformInt {
        low: i64,
        high: i64,
    },
    Choice(Vec<f64>),
}

impl ParamKind {
    fn validate(&self, name: &str) -> Result<(), SpaceError> {
        match self {
            Self::LogUniformReal { low, high } | Self::UniformReal { low, high } => {
                if !(low.is_finite() && high.is_finite()) {
                    return Err(invalid(name, "bounds must be finite"));
                }
                if low >= high {
                    return Err(invalid(name, format!("low ({low}) must be below high ({high})")));
                }
                if matches!(self, Self::LogUniformReal { .. }) && *low <= 0.0 {
                    return Err(invalid(name, "log-uniform bounds must be positive"));
                }
            }
            Self::LogUniformInt { low, high } => {
                if low >= high {
                    return Err(invalid(name, format!("low ({low}) must be below high ({high})")));
                }
                if *low <= 0 {
                    return Err(invalid(name, "log-uniform bounds must be positive"));
                }
            }
            Self::Choice(choices) => {
                if choices.is_empty() {
                    return Err(invalid(name, "choice list is empty"));
                }
                if choices.iter().any(|c| !c.is_finite()) {
                    return Err(invalid(name, "choices must be finite numbers"));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: f64) -> bool {
        match self {
            Self::LogUniformReal { low, high } | Self::UniformReal { low, high } => (*low..=*high).contains(&value),
            Self::LogUniformInt { low, high } => value.fract() == 0.0 && (*low as f64..=*high as f64).contains(&value),
            Self::Choice(choices) => choices.contains(&value),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::LogUniformReal { low, high } => {
                let (lo, hi) = (low.ln(), high.ln());
                (lo + (hi - lo) * rng.random::<f64>()).exp().clamp(*low, *high)
            }
            Self::UniformReal { low, high } => low + (high - low) * rng.random::<f64>(),
            Self::LogUniformInt { low, high } => {
                // Real draw over [low, high + 1) in log space, rounded down.
                let (lo, hi) = ((*low as f64).ln(), (*high as f64 + 1.0).ln());
                let value = (lo + (hi - lo) * rng.random::<f64>()).exp().floor();
                value.clamp(*low as f64, *high as f64)
            }
            Self::Choice(choices) => choices[rng.random_range(0..choices.len())],
        }
    }

    /// Position of `value` in the domain mapped to `[0, 1]`; log kinds use
    /// log scale and choices use their list index.
    pub fn normalize(&self, value: f64) -> f64 {
        let unit = match self {
            Self::LogUniformReal { low, high } => (value.ln() - low.ln()) / (high.ln() - low.ln()),
            Self::UniformReal { low, high } => (value - low) / (high - low),
            Self::LogUniformInt { low, high } => {
                let (lo, hi) = ((*low as f64).ln(), (*high as f64).ln());
                (value.ln() - lo) / (hi - lo)
            }
            Self::Choice(choices) => {
                if choices.len() == 1 {
                    return 0.5;
                }
                let index = choices.iter().position(|&c| c == value).unwrap_or(0);
                index as f64 / (choices.len() - 1) as f64
            }
        };
        unit.clamp(0.0, 1.0)
    }

    fn max_value(&self) -> f64 {
        match self {
            Self::LogUniformReal { high, .. } | Self::UniformReal { high, .. } => *high,
            Self::LogUniformInt { high, .. } => *high as f64,
            Self::Choice(choices) => choices.iter().copied().fold(f64::MIN, f64::max),
        }
    }

    fn min_value(&self) -> f64 {
        match self {
            Self::LogUniformReal { low, .. } | Self::UniformReal { low, .. } => *low,
            Self::LogUniformInt { low, .. } => *low as f64,
            Self::Choice(choices) => choices.iter().copied().fold(f64::MAX, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub initial: Option<f64>,
    /// The parameter whose value sets the number of training iterations.
    pub iteration_axis: bool,
}

/// Serialized form of a [`ParamSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpecDef {
    pub name: String,
    pub kind: ParamKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
    #[serde(default)]
    pub iteration_axis: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKindName {
    LogUniformReal,
    UniformReal,
    LogUniformInt,
    Choice,
}

impl TryFrom<&ParamSpecDef> for ParamSpec {
    type Error = SpaceError;

    fn try_from(def: &ParamSpecDef) -> Result<Self, SpaceError> {
        let name = def.name.as_str();
        let bounds = || -> Result<(f64, f64), SpaceError> {
            if def.choices.is_some() {
                return Err(invalid(name, "`choices` is only valid for kind `choice`"));
            }
            match (def.low, def.high) {
                (Some(low), Some(high)) => Ok((low, high)),
                (None, _) => Err(invalid(name, "missing `low`")),
                (_, None) => Err(invalid(name, "missing `high`")),
            }
        };
        let int_bound = |v: f64, key: &str| -> Result<i64, SpaceError> {
            if v.fract() == 0.0 && v.abs() < 2f64.powi(53) {
                Ok(v as i64)
            } else {
                Err(invalid(name, format!("`{key}` must be an integer")))
            }
        };
        let kind = match def.kind {
            ParamKindName::LogUniformReal => {
                let (low, high) = bounds()?;
                ParamKind::LogUniformReal { low, high }
            }
            ParamKindName::UniformReal => {
                let (low, high) = bounds()?;
                ParamKind::UniformReal { low, high }
            }
            ParamKindName::LogUniformInt => {
                let (low, high) = bounds()?;
                ParamKind::LogUniformInt {
                    low: int_bound(low, "low")?,
                    high: int_bound(high, "high")?,
                }
            }
            ParamKindName::Choice => {
                if def.low.is_some() || def.high.is_some() {
                    return Err(invalid(name, "`low`/`high` are not valid for kind `choice`"));
                }
                ParamKind::Choice(def.choices.clone().ok_or_else(|| invalid(name, "missing `choices`"))?)
            }
        };
        let spec = ParamSpec {
            name: def.name.clone(),
            kind,
            initial: def.initial,
            iteration_axis: def.iteration_axis,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<&ParamSpec> for ParamSpecDef {
    fn from(spec: &ParamSpec) -> Self {
        let (kind, low, high, choices) = match &spec.kind {
            ParamKind::LogUniformReal { low, high } => (ParamKindName::LogUniformReal, Some(*low), Some(*high), None),
            ParamKind::UniformReal { low, high } => (ParamKindName::UniformReal, Some(*low), Some(*high), None),
            ParamKind::LogUniformInt { low, high } => (
                ParamKindName::LogUniformInt,
                Some(*low as f64),
                Some(*high as f64),
                None,
            ),
            ParamKind::Choice(c) => (ParamKindName::Choice, None, None, Some(c.clone())),
        };
        Self {
            name: spec.name.clone(),
            kind,
            low,
            high,
            choices,
            initial: spec.initial,
            iteration_axis: spec.iteration_axis,
        }
    }
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            kind,
            initial: None,
            iteration_axis: false,
        }
    }

    pub fn with_initial(mut self, initial: f64) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn iteration_axis(mut self) -> Self {
        self.iteration_axis = true;
        self
    }

    fn validate(&self) -> Result<(), SpaceError> {
        self.kind.validate(&self.name)?;
        if let Some(initial) = self.initial {
            if !self.kind.contains(initial) {
                return Err(invalid(
                    &self.name,
                    format!("initial value {initial} is outside the domain"),
                ));
            }
        }
        if self.iteration_axis {
            if matches!(
                self.kind,
                ParamKind::UniformReal { .. } | ParamKind::LogUniformReal { .. }
            ) {
                return Err(invalid(
                    &self.name,
                    "the iteration axis must be an integer kind or a choice",
                ));
            }
            if self.kind.min_value() < 1.0 || self.kind.max_value() > f64::from(u32::MAX) {
                return Err(invalid(&self.name, "iteration counts must lie in [1, u32::MAX]"));
            }
            if let ParamKind::Choice(choices) = &self.kind {
                if choices.iter().any(|c| c.fract() != 0.0) {
                    return Err(invalid(&self.name, "iteration counts must be integers"));
                }
            }
        }
        Ok(())
    }
}

/// A validated set of parameters with exactly one iteration axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
    axis: usize,
}

/// One sampled point of a [`SearchSpace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Configuration {
    pub assignment: BTreeMap<String, f64>,
    pub trial_iterations: u32,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.assignment.get(name).copied()
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, p) in params.iter().enumerate() {
            p.validate()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        let axes: Vec<usize> = params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.iteration_axis)
            .map(|(i, _)| i)
            .collect();
        if axes.len() != 1 {
            return Err(SpaceError::IterationAxis(axes.len()));
        }
        Ok(Self { params, axis: axes[0] })
    }

    pub fn from_defs(defs: &[ParamSpecDef]) -> Result<Self, SpaceError> {
        Self::new(defs.iter().map(ParamSpec::try_from).collect::<Result<_, _>>()?)
    }

    pub fn to_defs(&self) -> Vec<ParamSpecDef> {
        self.params.iter().map(ParamSpecDef::from).collect()
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn axis(&self) -> &ParamSpec {
        &self.params[self.axis]
    }

    /// Largest iteration count any configuration can receive.
    pub fn max_trial_iterations(&self) -> u32 {
        self.axis().kind.max_value() as u32
    }

    fn assemble(&self, values: Vec<f64>) -> Configuration {
        let trial_iterations = values[self.axis].max(1.0) as u32;
        let assignment = self
            .params
            .iter()
            .zip(values)
            .map(|(p, v)| (p.name.clone(), v))
            .collect();
        Configuration {
            assignment,
            trial_iterations,
        }
    }

    /// Draws every parameter in order from one generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let values = self.params.iter().map(|p| p.kind.draw(rng)).collect();
        self.assemble(values)
    }

    /// The `index`-th configuration of the random-search stream for `seed`.
    /// Each parameter draws from its own stream keyed by `(seed, index, param)`.
    pub fn configuration_at(&self, seed: u64, index: u64) -> Configuration {
        let values = self
            .params
            .iter()
            .enumerate()
            .map(|(param, p)| p.kind.draw(&mut keyed_rng(&[tag::CONFIG, seed, index, param as u64])))
            .collect();
        self.assemble(values)
    }

    pub fn sequence_for_seed(&self, seed: u64, n: usize) -> Vec<Configuration> {
        (0..n as u64).map(|i| self.configuration_at(seed, i)).collect()
    }

    /// Configuration made of the declared initial values, when every
    /// parameter declares one.
    pub fn initial_configuration(&self) -> Option<Configuration> {
        let values = self.params.iter().map(|p| p.initial).collect::<Option<Vec<_>>>()?;
        Some(self.assemble(values))
    }

    /// Each non-axis parameter of `config` mapped into `[0, 1]`, in space order.
    pub fn normalized_features(&self, config: &Configuration) -> Vec<f64> {
        self.params
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.axis)
            .map(|(_, p)| p.kind.normalize(config.get(&p.name).unwrap_or(f64::NAN)))
            .collect()
    }
}
