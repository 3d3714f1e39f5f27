//! Trial-pruning policies.
//!
//! The simulator drives every policy through [`Scheduler`]: once when a trial
//! starts, then once per finished training iteration. During a step the
//! policy may ask for the constraint metric of a checkpoint through the
//! supplied evaluator; the caller computes and charges it.

mod ace;
mod asha;
mod baseline;
mod posthoc;
mod stratum;

use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::trial_history::{CheckpointGroup, TrialId};

pub use ace::{ace_gate, ace_on_trial_start, AceConfig, AceScheduler, IntervalMode, StoppingMode};
pub use asha::{rung_levels, AshaConfig, AshaScheduler};
pub use baseline::NoStoppingScheduler;
pub use posthoc::{post_hoc_feasibility_scan, PostHocScan, ScanCandidate, ScanResult};
pub use stratum::{group_rank, stratum_should_stop, stratum_stop_count, GroupRank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Continue,
    Stop,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Continue => "continue",
            Self::Stop => "stop",
        }
    }
}

/// Where a trial stood in the population its verdict was computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankInfo {
    pub group: CheckpointGroup,
    /// 1 is the worst member of the population.
    pub rank_from_worst: usize,
    pub group_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerDecision {
    pub action: Action,
    /// Whether the constraint was computed during this step.
    pub evaluate_constraint: bool,
    pub rank: Option<RankInfo>,
}

impl SchedulerDecision {
    pub fn proceed(evaluate_constraint: bool) -> Self {
        Self {
            action: Action::Continue,
            evaluate_constraint,
            rank: None,
        }
    }
}

/// A trial's state right after training iteration `iteration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointContext<S> {
    pub trial_id: TrialId,
    pub iteration: u32,
    pub max_iterations: u32,
    /// Minimized optimization metric at this iteration.
    pub opt_metric: S,
    /// Cost charged for this iteration.
    pub primary_cost: S,
    pub sim_time: S,
}

/// Result of one constraint evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSample<S> {
    pub value: S,
    pub cost: S,
}

/// Evaluates the constraint metric of the current trial at a checkpoint
/// (an iteration no later than the current one).
pub type ConstraintEvaluator<'a, S> = dyn FnMut(u32) -> ConstraintSample<S> + 'a;

/// Callback contract between the simulator and a pruning policy.
///
/// Calls are serialized: one step at a time, interleaved across running
/// trials in event order.
pub trait Scheduler<S: Scalar>: Send {
    fn name(&self) -> &str;

    /// Registers a new trial. Returns the constraint evaluation interval the
    /// trial will use, if the policy has one.
    fn on_trial_start(&mut self, trial: TrialId, max_iterations: u32) -> Option<u32>;

    /// Processes one checkpoint. A `Stop` is final. A trial that has reached
    /// its last iteration completes whatever the action.
    fn step(
        &mut self,
        ctx: &CheckpointContext<S>,
        evaluate_constraint: &mut ConstraintEvaluator<'_, S>,
    ) -> SchedulerDecision;

    /// Whether the policy never looks at the constraint, so the best feasible
    /// trial has to be found by a scan after tuning.
    fn needs_post_hoc_scan(&self) -> bool {
        false
    }
}

impl<S: Scalar> Scheduler<S> for Box<dyn Scheduler<S>> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn on_trial_start(&mut self, trial: TrialId, max_iterations: u32) -> Option<u32> {
        (**self).on_trial_start(trial, max_iterations)
    }

    fn step(
        &mut self,
        ctx: &CheckpointContext<S>,
        evaluate_constraint: &mut ConstraintEvaluator<'_, S>,
    ) -> SchedulerDecision {
        (**self).step(ctx, evaluate_constraint)
    }

    fn needs_post_hoc_scan(&self) -> bool {
        (**self).needs_post_hoc_scan()
    }
}
