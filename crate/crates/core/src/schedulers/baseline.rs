use crate::num::Scalar;
use crate::trial_history::TrialId;

use super::{CheckpointContext, ConstraintEvaluator, Scheduler, SchedulerDecision};

/// Runs every trial to completion. With a constraint callback attached the
/// constraint is computed once, at the final iteration.
#[derive(Debug, Clone)]
pub struct NoStoppingScheduler {
    name: String,
    constraint_callback: bool,
}

impl NoStoppingScheduler {
    pub fn new(constraint_callback: bool) -> Self {
        let name = if constraint_callback {
            "no-stopping-callback"
        } else {
            "no-stopping"
        };
        Self {
            name: name.to_owned(),
            constraint_callback,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<S: Scalar> Scheduler<S> for NoStoppingScheduler {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_trial_start(&mut self, _trial: TrialId, _max_iterations: u32) -> Option<u32> {
        None
    }

    fn step(
        &mut self,
        ctx: &CheckpointContext<S>,
        evaluate_constraint: &mut ConstraintEvaluator<'_, S>,
    ) -> SchedulerDecision {
        let evaluate = self.constraint_callback && ctx.iteration >= ctx.max_iterations;
        if evaluate {
            evaluate_constraint(ctx.iteration);
        }
        SchedulerDecision::proceed(evaluate)
    }

    fn needs_post_hoc_scan(&self) -> bool {
        !self.constraint_callback
    }
}
