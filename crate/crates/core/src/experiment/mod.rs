//! Experiment configs, runs across arms and seeds, and report files.

mod config;
mod output;
mod sweeps;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::sim::{run_experiment, ExperimentReport, Problem, SimError, SimSettings};
use crate::trial_history::ConstraintSpec;

pub use config::{
    AceArm, ArmConfig, AshaArm, AshaConstraintMode, ExperimentConfig, NoStoppingArm, ProblemConfig, SchedulerConfig,
};
pub use output::{format_float, write_outputs, write_trace_csv, OutputFiles};
pub use sweeps::{
    cost_curve, cost_curve_preset, truncation_sweep, validate_theorem, write_cost_curve_csv, write_truncation_csv,
    CostCurveRow, TheoremCase, TheoremSweep, TruncationRow, COST_CURVE_PRESETS,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("arm `{arm}`, seed {seed}: {source}")]
    Run {
        arm: String,
        seed: u64,
        #[source]
        source: SimError,
    },
}

/// One (arm, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub arm: String,
    pub seed: u64,
    pub report: ExperimentReport,
}

/// A validated config with its problem built.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    problem: Problem,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let problem = config.problem()?;
        Ok(Self { config, problem })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        if !seeds.is_empty() {
            self.config.seeds = seeds;
        }
        self
    }

    pub fn with_output_dir(mut self, dir: PathBuf) -> Self {
        self.config.output_dir = dir;
        self
    }

    fn constraint(&self) -> ConstraintSpec<f64> {
        ConstraintSpec::new(self.problem.constraint_threshold()).expect("calibrated thresholds are finite")
    }

    pub fn run_one(&self, arm: &ArmConfig, seed: u64) -> Result<ExperimentReport, ExperimentError> {
        let max_iterations = self.problem.space().max_trial_iterations();
        let mut scheduler = arm
            .scheduler
            .build(&arm.name, self.constraint(), max_iterations)
            .map_err(|message| ExperimentError::Config {
                key: format!("arms.{}", arm.name),
                message,
            })?;
        let settings = SimSettings {
            budget: self.config.budget,
            max_concurrent: self.config.max_concurrent,
            search_seed: seed,
        };
        run_experiment(&self.problem, scheduler.as_mut(), &settings).map_err(|source| ExperimentError::Run {
            arm: arm.name.clone(),
            seed,
            source,
        })
    }

    /// Runs every arm on every seed, in parallel. Results come back in
    /// config order: arm-major, then seed.
    pub fn run(&self) -> Result<Vec<RunResult>, ExperimentError> {
        let jobs: Vec<(&ArmConfig, u64)> = self
            .config
            .arms
            .iter()
            .flat_map(|arm| self.config.seeds.iter().map(move |&seed| (arm, seed)))
            .collect();
        jobs.into_par_iter()
            .map(|(arm, seed)| {
                Ok(RunResult {
                    arm: arm.name.clone(),
                    seed,
                    report: self.run_one(arm, seed)?,
                })
            })
            .collect()
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    /// `n - 1` denominator; `None` below two values.
    pub sd: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let sd = mean.filter(|_| n > 1).map(|m| {
            let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: String,
    pub scheduler: String,
    pub runs: usize,
    /// Share of seeds that found a feasible checkpoint.
    pub success_rate: f64,
    /// Over successful seeds only.
    pub best_feasible_score: Stat,
    pub time_to_best: Stat,
    pub total_trials: Stat,
    pub constraint_evaluations: Stat,
    pub beta_one_fraction: Stat,
    pub measured_cost_ratio: Stat,
}

/// Aggregates per arm, in first-appearance order.
pub fn summarize(results: &[RunResult]) -> Vec<ArmSummary> {
    let mut arms: Vec<&str> = Vec::new();
    for r in results {
        if !arms.contains(&r.arm.as_str()) {
            arms.push(&r.arm);
        }
    }
    arms.into_iter()
        .map(|arm| {
            let runs: Vec<&ExperimentReport> = results.iter().filter(|r| r.arm == arm).map(|r| &r.report).collect();
            let collect = |f: &dyn Fn(&ExperimentReport) -> Option<f64>| -> Vec<f64> {
                runs.iter().filter_map(|r| f(r)).collect()
            };
            let successes = runs.iter().filter(|r| r.feasible_found).count();
            ArmSummary {
                arm: arm.to_owned(),
                scheduler: runs[0].scheduler.clone(),
                runs: runs.len(),
                success_rate: successes as f64 / runs.len() as f64,
                best_feasible_score: Stat::of(&collect(&|r| r.best_feasible_score)),
                time_to_best: Stat::of(&collect(&|r| r.time_to_best)),
                total_trials: Stat::of(&collect(&|r| Some(r.total_trials as f64))),
                constraint_evaluations: Stat::of(&collect(&|r| Some(r.constraint_evaluations as f64))),
                beta_one_fraction: Stat::of(&collect(&|r| r.interval_tally.beta_one_fraction())),
                measured_cost_ratio: Stat::of(&collect(&|r| r.measured_cost_ratio)),
            }
        })
        .collect()
}
