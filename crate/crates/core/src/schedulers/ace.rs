//! Adaptive constraint-aware early stopping.
//!
//! Per trial: pick a constraint interval from the observed cost ratio, then at
//! every iteration evaluate the constraint only on interval boundaries where
//! the metric beats the best feasible score, record the checkpoint, and apply
//! stratum truncation (or hard stopping on invalid checkpoints).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cost_model::choose_interval;
use crate::num::Scalar;
use crate::trial_history::{CheckpointGroup, CheckpointRecord, ConstraintSpec, RunningHistory, TrialId};

use super::stratum::stratum_should_stop;
use super::{Action, CheckpointContext, ConstraintEvaluator, Scheduler, SchedulerDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingMode {
    Stratum,
    /// Stop on the first invalid checkpoint; other groups still use stratum truncation.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMode {
    Adaptive,
    Fixed1,
    FixedT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AceConfig<S> {
    pub truncation_percentage: S,
    pub constraint: ConstraintSpec<S>,
    pub low_overhead_gate: bool,
    pub stopping_mode: StoppingMode,
    pub interval_mode: IntervalMode,
}

impl<S: Scalar> AceConfig<S> {
    pub const DEFAULT_TRUNCATION: f64 = 0.25;

    pub fn new(constraint: ConstraintSpec<S>) -> Self {
        Self {
            truncation_percentage: S::lit(Self::DEFAULT_TRUNCATION),
            constraint,
            low_overhead_gate: true,
            stopping_mode: StoppingMode::Stratum,
            interval_mode: IntervalMode::Adaptive,
        }
    }

    pub fn truncation(mut self, p: S) -> Self {
        self.truncation_percentage = p;
        self
    }

    pub fn gate(mut self, on: bool) -> Self {
        self.low_overhead_gate = on;
        self
    }

    pub fn stopping(mut self, mode: StoppingMode) -> Self {
        self.stopping_mode = mode;
        self
    }

    pub fn interval(mut self, mode: IntervalMode) -> Self {
        self.interval_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let p = self.truncation_percentage;
        if p.is_finite() && p > S::zero() && p < S::one() {
            Ok(())
        } else {
            Err(format!("truncation_percentage must lie in (0, 1), got {p}"))
        }
    }
}

/// Interval for a new trial with `max_iterations` iterations.
///
/// Without a measured cost ratio the trial gets `T`, so an expensive
/// constraint is paid at most once.
pub fn ace_on_trial_start<S: Scalar>(config: &AceConfig<S>, history: &RunningHistory<S>, max_iterations: u32) -> u32 {
    let max_iterations = max_iterations.max(1);
    match config.interval_mode {
        IntervalMode::Fixed1 => 1,
        IntervalMode::FixedT => max_iterations,
        IntervalMode::Adaptive => match history.ledger().cost_ratio() {
            None => max_iterations,
            Some(r) => choose_interval(r, config.truncation_percentage, max_iterations).unwrap_or(max_iterations),
        },
    }
}

/// Low-overhead gate: evaluate on an interval boundary, and with the gate on
/// only when the metric is no worse than the best feasible score.
pub fn ace_gate<S: Scalar>(
    opt_metric: S,
    best_feasible_score: S,
    at_interval_boundary: bool,
    gate_enabled: bool,
) -> bool {
    at_interval_boundary && (!gate_enabled || opt_metric <= best_feasible_score)
}

#[derive(Debug, Clone, Copy)]
struct TrialPlan {
    interval: u32,
    max_iterations: u32,
}

#[derive(Debug, Clone)]
pub struct AceScheduler<S> {
    name: String,
    config: AceConfig<S>,
    history: RunningHistory<S>,
    trials: HashMap<TrialId, TrialPlan>,
}

impl<S: Scalar> AceScheduler<S> {
    pub fn new(config: AceConfig<S>) -> Result<Self, String> {
        config.validate()?;
        let name = match (config.stopping_mode, config.low_overhead_gate, config.interval_mode) {
            (StoppingMode::Stratum, true, IntervalMode::Adaptive) => "ace",
            (StoppingMode::Hard, true, IntervalMode::Adaptive) => "ace-hard",
            (StoppingMode::Stratum, false, IntervalMode::Adaptive) => "ace-noskip",
            (StoppingMode::Stratum, true, IntervalMode::Fixed1) => "ace-beta-1",
            (StoppingMode::Stratum, true, IntervalMode::FixedT) => "ace-beta-t",
            _ => "ace-custom",
        };
        Ok(Self {
            name: name.to_owned(),
            history: RunningHistory::new(config.constraint),
            config,
            trials: HashMap::new(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &AceConfig<S> {
        &self.config
    }

    pub fn history(&self) -> &RunningHistory<S> {
        &self.history
    }

    pub fn interval_of(&self, trial: TrialId) -> Option<u32> {
        self.trials.get(&trial).map(|p| p.interval)
    }
}

impl<S: Scalar> Scheduler<S> for AceScheduler<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_trial_start(&mut self, trial: TrialId, max_iterations: u32) -> Option<u32> {
        let interval = ace_on_trial_start(&self.config, &self.history, max_iterations);
        self.trials.insert(
            trial,
            TrialPlan {
                interval,
                max_iterations: max_iterations.max(1),
            },
        );
        Some(interval)
    }

    fn step(
        &mut self,
        ctx: &CheckpointContext<S>,
        evaluate_constraint: &mut ConstraintEvaluator<'_, S>,
    ) -> SchedulerDecision {
        let plan = match self.trials.get(&ctx.trial_id) {
            Some(plan) => *plan,
            None => {
                self.on_trial_start(ctx.trial_id, ctx.max_iterations);
                self.trials[&ctx.trial_id]
            }
        };
        let is_last = ctx.iteration >= plan.max_iterations;
        let boundary = ctx.iteration.is_multiple_of(plan.interval);
        let bootstrap = is_last
            && self.config.interval_mode == IntervalMode::Adaptive
            && self.config.low_overhead_gate
            && self.history.ledger().constraint_cost_count() == 0;
        let evaluate = bootstrap
            || ace_gate(
                ctx.opt_metric,
                self.history.best_feasible_score(),
                boundary,
                self.config.low_overhead_gate,
            );

        self.history.ledger_mut().charge_primary(ctx.primary_cost);
        let constraint_value = evaluate.then(|| {
            let sample = evaluate_constraint(ctx.iteration);
            self.history.ledger_mut().charge_constraint(sample.cost);
            sample.value
        });
        let record = CheckpointRecord::observe(
            ctx.trial_id,
            ctx.iteration,
            ctx.opt_metric,
            constraint_value,
            self.history.constraint(),
            ctx.sim_time,
        );
        let group = record.group;
        self.history
            .record_checkpoint(record)
            .expect("records classified against the history's own constraint are consistent");

        if is_last {
            return SchedulerDecision::proceed(evaluate);
        }
        if self.config.stopping_mode == StoppingMode::Hard && group == CheckpointGroup::Invalid {
            return SchedulerDecision {
                action: Action::Stop,
                evaluate_constraint: evaluate,
                rank: None,
            };
        }
        let (action, rank) = stratum_should_stop(self.config.truncation_percentage, &self.history, ctx.trial_id, group);
        SchedulerDecision {
            action,
            evaluate_constraint: evaluate,
            rank,
        }
    }
}
