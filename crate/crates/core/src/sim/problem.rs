//! Synthetic tuning problems: a smooth map from configurations to curves.
//!
//! Each non-axis parameter is mapped into `[0, 1]`. A seeded landscape turns
//! that point into a quality score (how good the converged metric is), a
//! speed (how fast it converges) and a capacity (how costly and how
//! constraint-violating the configuration is). The constraint level mixes
//! quality and capacity, so better models tend to violate the constraint
//! more, as fairness or robustness constraints usually do.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::rng::{keyed_rng, mix_key, tag};
use crate::search_space::{Configuration, ParamKind, ParamSpec, SearchSpace};

use super::curve::{ConstraintCurve, OptCurve, TrialCurve};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricDirection {
    Minimize,
    Maximize,
}

impl MetricDirection {
    /// Converts a metric to the minimized internal value (and back: the map
    /// is an involution).
    pub fn internal(self, value: f64) -> f64 {
        match self {
            Self::Minimize => value,
            Self::Maximize => -value,
        }
    }

    pub fn natural(self, internal: f64) -> f64 {
        self.internal(internal)
    }
}

pub const FAIRNESS_LIKE: &str = "fairness-like";
pub const ROBUSTNESS_LIKE: &str = "robustness-like";
pub const PRESETS: [&str; 2] = [FAIRNESS_LIKE, ROBUSTNESS_LIKE];

/// Number of configurations drawn to place the threshold at a target
/// ever-feasible fraction.
const CALIBRATION_SAMPLES: u64 = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub direction: MetricDirection,
    pub problem_seed: u64,
    /// Metric before any training.
    pub metric_start: f64,
    /// Converged metric of the worst configuration.
    pub metric_floor: f64,
    /// Extra converged metric of the best configuration.
    pub metric_span: f64,
    /// Width of the quality peak in normalized parameter space.
    pub landscape_width: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub opt_noise: f64,
    pub constraint_base: f64,
    pub constraint_span: f64,
    /// Share of the constraint level driven by quality rather than capacity.
    pub quality_coupling: f64,
    pub start_offset_min: f64,
    pub start_offset_max: f64,
    pub constraint_rate: f64,
    pub oscillation_max: f64,
    pub period_min: f64,
    pub period_max: f64,
    pub constraint_noise: f64,
    /// Mean cost of one training iteration.
    pub primary_cost: f64,
    /// Log-scale spread of the per-iteration cost across capacities.
    pub cost_spread: f64,
    /// Constraint evaluation cost as a multiple of the iteration cost.
    pub cost_ratio: f64,
    /// Target fraction of configurations that are ever feasible; sets the
    /// threshold unless `constraint_threshold` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_threshold: Option<f64>,
}

impl ProblemSpec {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            FAIRNESS_LIKE => Some(Self {
                name: FAIRNESS_LIKE.into(),
                direction: MetricDirection::Maximize,
                problem_seed: 2022,
                metric_start: 0.5,
                metric_floor: 0.74,
                metric_span: 0.12,
                landscape_width: 0.08,
                rate_min: 0.04,
                rate_max: 0.6,
                opt_noise: 0.001,
                constraint_base: 0.1,
                constraint_span: 0.3,
                quality_coupling: 0.5,
                start_offset_min: -0.05,
                start_offset_max: 0.12,
                constraint_rate: 0.25,
                oscillation_max: 0.02,
                period_min: 6.0,
                period_max: 16.0,
                constraint_noise: 0.003,
                primary_cost: 1.0,
                cost_spread: 0.6,
                cost_ratio: 2.0,
                feasible_fraction: Some(0.15),
                constraint_threshold: None,
            }),
            ROBUSTNESS_LIKE => Some(Self {
                name: ROBUSTNESS_LIKE.into(),
                direction: MetricDirection::Maximize,
                problem_seed: 2023,
                metric_start: 0.5,
                metric_floor: 0.8,
                metric_span: 0.12,
                landscape_width: 0.08,
                rate_min: 0.03,
                rate_max: 0.4,
                opt_noise: 0.002,
                constraint_base: 0.15,
                constraint_span: 0.2,
                quality_coupling: 0.4,
                start_offset_min: -0.02,
                start_offset_max: 0.1,
                constraint_rate: 0.15,
                oscillation_max: 0.01,
                period_min: 8.0,
                period_max: 24.0,
                constraint_noise: 0.004,
                primary_cost: 1.0,
                cost_spread: 0.5,
                cost_ratio: 24.0,
                feasible_fraction: Some(0.1),
                constraint_threshold: None,
            }),
            _ => None,
        }
    }

    /// Default search space of a preset.
    pub fn preset_space(name: &str) -> Option<SearchSpace> {
        let params = match name {
            FAIRNESS_LIKE => vec![
                ParamSpec::new("iterations", ParamKind::LogUniformInt { low: 8, high: 64 })
                    .iteration_axis()
                    .with_initial(8.0),
                ParamSpec::new("leaves", ParamKind::LogUniformInt { low: 4, high: 1024 }).with_initial(4.0),
                ParamSpec::new("min_leaf_samples", ParamKind::LogUniformInt { low: 2, high: 129 }).with_initial(20.0),
                ParamSpec::new(
                    "step_size",
                    ParamKind::LogUniformReal {
                        low: 1.0 / 1024.0,
                        high: 1.0,
                    },
                )
                .with_initial(0.1),
                ParamSpec::new("log_bins", ParamKind::LogUniformInt { low: 3, high: 11 }).with_initial(8.0),
                ParamSpec::new("feature_fraction", ParamKind::UniformReal { low: 0.01, high: 1.0 }).with_initial(1.0),
                ParamSpec::new(
                    "l1",
                    ParamKind::LogUniformReal {
                        low: 1.0 / 1024.0,
                        high: 1024.0,
                    },
                )
                .with_initial(1.0 / 1024.0),
                ParamSpec::new(
                    "l2",
                    ParamKind::LogUniformReal {
                        low: 1.0 / 1024.0,
                        high: 1024.0,
                    },
                )
                .with_initial(1.0),
            ],
            ROBUSTNESS_LIKE => vec![
                ParamSpec::new("step_size", ParamKind::LogUniformReal { low: 1e-6, high: 1e-3 }).with_initial(1e-5),
                ParamSpec::new("iterations", ParamKind::LogUniformInt { low: 4, high: 128 })
                    .iteration_axis()
                    .with_initial(32.0),
                ParamSpec::new("batch", ParamKind::Choice(vec![4.0, 8.0, 16.0, 32.0])).with_initial(32.0),
                ParamSpec::new("warmup", ParamKind::UniformReal { low: 0.0, high: 0.3 }).with_initial(0.0),
                ParamSpec::new("decay", ParamKind::UniformReal { low: 0.0, high: 0.3 }).with_initial(0.0),
                ParamSpec::new("epsilon", ParamKind::LogUniformReal { low: 1e-8, high: 1e-6 }).with_initial(1e-6),
                ParamSpec::new("init_seed", ParamKind::Choice(vec![40.0, 41.0, 42.0, 43.0, 44.0])).with_initial(42.0),
            ],
            _ => return None,
        };
        Some(SearchSpace::new(params).expect("preset spaces are valid"))
    }

    /// Applies a JSON object of field overrides. Unknown fields are rejected
    /// by name.
    pub fn with_overrides(&self, overrides: &serde_json::Map<String, Value>) -> Result<Self, SimError> {
        let mut merged = serde_json::to_value(self).expect("problem spec serializes");
        let object = merged.as_object_mut().expect("problem spec is an object");
        for (key, value) in overrides {
            if key == "name" {
                return Err(SimError::InvalidProblem(
                    "`name` comes from the preset and cannot be overridden".into(),
                ));
            }
            object.insert(key.clone(), value.clone());
        }
        serde_json::from_value(merged).map_err(|e| SimError::InvalidProblem(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidProblem(msg));
        let positive = [
            ("landscape_width", self.landscape_width),
            ("rate_min", self.rate_min),
            ("rate_max", self.rate_max),
            ("constraint_rate", self.constraint_rate),
            ("period_min", self.period_min),
            ("period_max", self.period_max),
            ("primary_cost", self.primary_cost),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("`{key}` must be positive, got {v}"));
            }
        }
        let nonnegative = [
            ("opt_noise", self.opt_noise),
            ("constraint_noise", self.constraint_noise),
            ("oscillation_max", self.oscillation_max),
            ("cost_spread", self.cost_spread),
            ("cost_ratio", self.cost_ratio),
            ("constraint_span", self.constraint_span),
            ("metric_span", self.metric_span),
        ];
        for (key, v) in nonnegative {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("`{key}` must be nonnegative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.quality_coupling) {
            return fail(format!(
                "`quality_coupling` must lie in [0, 1], got {}",
                self.quality_coupling
            ));
        }
        if self.rate_min > self.rate_max {
            return fail("`rate_min` exceeds `rate_max`".into());
        }
        if self.period_min > self.period_max {
            return fail("`period_min` exceeds `period_max`".into());
        }
        if self.start_offset_min > self.start_offset_max {
            return fail("`start_offset_min` exceeds `start_offset_max`".into());
        }
        match (self.feasible_fraction, self.constraint_threshold) {
            (_, Some(t)) if !t.is_finite() => fail("`constraint_threshold` must be finite".into()),
            (Some(f), None) if !(f > 0.0 && f <= 1.0) => {
                fail(format!("`feasible_fraction` must lie in (0, 1], got {f}"))
            }
            (None, None) => fail("set either `feasible_fraction` or `constraint_threshold`".into()),
            _ => Ok(()),
        }
    }
}

/// Per-dimension coefficients drawn from the problem seed.
#[derive(Debug, Clone, PartialEq)]
struct Landscape {
    centers: Vec<f64>,
    weights: Vec<f64>,
    speed: Vec<f64>,
    capacity: Vec<f64>,
}

impl Landscape {
    fn new(seed: u64, dims: usize) -> Self {
        let draw = |dim: usize, which: u64| keyed_rng(&[tag::LANDSCAPE, seed, dim as u64, which]).random::<f64>();
        Self {
            centers: (0..dims).map(|d| 0.2 + 0.6 * draw(d, 0)).collect(),
            weights: (0..dims).map(|d| 0.5 + draw(d, 1)).collect(),
            speed: (0..dims).map(|d| 2.0 * draw(d, 2) - 1.0).collect(),
            capacity: (0..dims).map(|d| draw(d, 3)).collect(),
        }
    }

    /// `(quality, speed, capacity)`, each in `[0, 1]`.
    fn latent(&self, x: &[f64], width: f64) -> (f64, f64, f64) {
        let weight_sum: f64 = self.weights.iter().sum();
        let dist2 = x
            .iter()
            .zip(&self.centers)
            .zip(&self.weights)
            .map(|((xi, c), w)| w * (xi - c).powi(2))
            .sum::<f64>()
            / weight_sum.max(f64::MIN_POSITIVE);
        let quality = (-dist2 / width).exp();

        let speed_norm: f64 = self.speed.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let speed = 0.5 + x.iter().zip(&self.speed).map(|(xi, v)| v * (xi - 0.5)).sum::<f64>() / speed_norm;

        let cap_norm: f64 = self.capacity.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let capacity = x.iter().zip(&self.capacity).map(|(xi, a)| a * xi).sum::<f64>() / cap_norm;
        (quality, speed.clamp(0.0, 1.0), capacity.clamp(0.0, 1.0))
    }
}

/// A problem specification bound to a search space.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    space: SearchSpace,
    landscape: Landscape,
    threshold: f64,
}

impl Problem {
    pub fn new(spec: ProblemSpec, space: SearchSpace) -> Result<Self, SimError> {
        spec.validate()?;
        let dims = space.params().len() - 1;
        let landscape = Landscape::new(spec.problem_seed, dims);
        let mut problem = Self {
            spec,
            space,
            landscape,
            threshold: f64::NAN,
        };
        problem.threshold = match (problem.spec.constraint_threshold, problem.spec.feasible_fraction) {
            (Some(threshold), _) => threshold,
            (None, Some(fraction)) => problem.calibrate_threshold(fraction),
            (None, None) => unreachable!("validated above"),
        };
        Ok(problem)
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        let spec = ProblemSpec::preset(name).ok_or_else(|| SimError::UnknownPreset(name.to_owned()))?;
        let space = ProblemSpec::preset_space(name).expect("every preset has a space");
        Self::new(spec, space)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn direction(&self) -> MetricDirection {
        self.spec.direction
    }

    /// Constraint threshold `tau` (feasible iff `g <= tau`).
    pub fn constraint_threshold(&self) -> f64 {
        self.threshold
    }

    /// Curve of `config` for the trial keyed by `trial_key`.
    pub fn curve_for(&self, config: &Configuration, trial_key: u64) -> TrialCurve {
        let s = &self.spec;
        let x = self.space.normalized_features(config);
        let (quality, speed, capacity) = self.landscape.latent(&x, s.landscape_width);
        let mut rng = keyed_rng(&[tag::TRIAL, s.problem_seed, trial_key]);
        let mut unit = || rng.random::<f64>();

        let rate = s.rate_min * (s.rate_max / s.rate_min).powf(speed);
        let g_level = s.constraint_base
            + s.constraint_span * (s.quality_coupling * quality + (1.0 - s.quality_coupling) * capacity);
        let offset = s.start_offset_min + (s.start_offset_max - s.start_offset_min) * unit();
        let g_rate = s.constraint_rate * (0.5 + unit());
        let amplitude = s.oscillation_max * unit();
        let period = s.period_min + (s.period_max - s.period_min) * unit();
        let primary_cost = s.primary_cost * (s.cost_spread * (capacity - 0.5)).exp();

        TrialCurve {
            opt: OptCurve {
                asymptote: s.metric_floor + s.metric_span * quality,
                start: s.metric_start,
                rate,
                noise: s.opt_noise,
            },
            constraint: ConstraintCurve {
                asymptote: g_level,
                start: g_level + offset,
                rate: g_rate,
                amplitude,
                period,
                noise: s.constraint_noise,
            },
            primary_cost,
            constraint_cost: s.cost_ratio * primary_cost,
            max_iterations: config.trial_iterations,
        }
    }

    fn calibration_curves(&self, samples: u64, stream: u64) -> impl Iterator<Item = TrialCurve> + '_ {
        let seed = mix_key(&[tag::CALIBRATION, self.spec.problem_seed, stream]);
        (0..samples).map(move |i| {
            let config = self.space.configuration_at(seed, i);
            self.curve_for(&config, mix_key(&[seed, i]))
        })
    }

    fn calibrate_threshold(&self, fraction: f64) -> f64 {
        let mut minima: Vec<f64> = self
            .calibration_curves(CALIBRATION_SAMPLES, 0)
            .map(|c| c.min_constraint_mean())
            .collect();
        minima.sort_by(f64::total_cmp);
        let index = ((fraction * minima.len() as f64).ceil() as usize).clamp(1, minima.len()) - 1;
        minima[index]
    }

    /// Fraction of `samples` fresh configurations whose noise-free
    /// constraint curve dips to the threshold at some iteration.
    pub fn ever_feasible_fraction(&self, samples: u64) -> f64 {
        let feasible = self
            .calibration_curves(samples, 1)
            .filter(|c| c.min_constraint_mean() <= self.threshold)
            .count();
        feasible as f64 / samples as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        for name in PRESETS {
            let p = Problem::preset(name).unwrap();
            assert!(p.constraint_threshold().is_finite());
            assert_eq!(p.spec().name, name);
        }
        assert!(matches!(Problem::preset("nope"), Err(SimError::UnknownPreset(_))));
    }

    #[test]
    fn curves_are_deterministic() {
        let p = Problem::preset(FAIRNESS_LIKE).unwrap();
        let config = p.space().configuration_at(20, 3);
        assert_eq!(p.curve_for(&config, 77), p.curve_for(&config, 77));
        assert_ne!(p.curve_for(&config, 77), p.curve_for(&config, 78));
        let curve = p.curve_for(&config, 77);
        assert!(curve.validate().is_ok());
        assert_eq!(curve.max_iterations, config.trial_iterations);
    }

    #[test]
    fn calibrated_fraction_is_close_to_target() {
        let p = Problem::preset(FAIRNESS_LIKE).unwrap();
        let fraction = p.ever_feasible_fraction(4000);
        assert!((0.12..=0.18).contains(&fraction), "{fraction}");
    }

    #[test]
    fn cost_ratio_follows_spec() {
        let p = Problem::preset(ROBUSTNESS_LIKE).unwrap();
        let config = p.space().configuration_at(1, 1);
        let c = p.curve_for(&config, 5);
        assert!((c.constraint_cost / c.primary_cost - 24.0).abs() < 1e-12);
    }

    #[test]
    fn overrides() {
        let spec = ProblemSpec::preset(FAIRNESS_LIKE).unwrap();
        let mut o = serde_json::Map::new();
        o.insert("cost_ratio".into(), 5.0.into());
        o.insert("constraint_threshold".into(), 0.2.into());
        let s = spec.with_overrides(&o).unwrap();
        assert_eq!(s.cost_ratio, 5.0);
        let p = Problem::new(s, ProblemSpec::preset_space(FAIRNESS_LIKE).unwrap()).unwrap();
        assert_eq!(p.constraint_threshold(), 0.2);

        let mut bad = serde_json::Map::new();
        bad.insert("cost_ration".into(), 5.0.into());
        let err = spec.with_overrides(&bad).unwrap_err().to_string();
        assert!(err.contains("cost_ration"), "{err}");

        let mut bad = serde_json::Map::new();
        bad.insert("rate_min".into(), (-1.0).into());
        let s = spec.with_overrides(&bad).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn direction_round_trips() {
        assert_eq!(MetricDirection::Maximize.internal(0.8), -0.8);
        assert_eq!(MetricDirection::Maximize.natural(-0.8), 0.8);
        assert_eq!(MetricDirection::Minimize.internal(0.8), 0.8);
    }
}
