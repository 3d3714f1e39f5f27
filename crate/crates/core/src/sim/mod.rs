//! Deterministic discrete-event tuning simulator.

mod curve;
mod engine;
mod problem;
mod replay;

use thiserror::Error;

use crate::search_space::SpaceError;

pub use curve::{ConstraintCurve, Meter, OptCurve, TrialCurve};
pub use engine::{
    run_experiment, ExperimentReport, IntervalTally, SimSettings, TraceAction, TraceRow, TrialStatus, TrialSummary,
};
pub use problem::{MetricDirection, Problem, ProblemSpec, FAIRNESS_LIKE, PRESETS, ROBUSTNESS_LIKE};
pub use replay::{replay, ReplayOutcome, ReplayTrial, ScriptedTrial};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("iteration {iteration} outside 1..={max_iterations}")]
    IterationOutOfRange { iteration: u32, max_iterations: u32 },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("unknown problem preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}
