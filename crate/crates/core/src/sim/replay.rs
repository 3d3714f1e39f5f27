//! Scripted replays: hand-written metric sequences fed to a scheduler in
//! lockstep phases, for fixtures where exact values matter.

use crate::schedulers::{Action, CheckpointContext, ConstraintSample, Scheduler, SchedulerDecision};
use crate::trial_history::TrialId;

/// One trial's metric values per iteration (index 0 is iteration 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrial {
    /// Minimized optimization metric.
    pub opt: Vec<f64>,
    pub constraint: Vec<f64>,
    pub primary_cost: f64,
    pub constraint_cost: f64,
    /// Phase in which the trial runs its first iteration.
    pub start_phase: u32,
}

impl ScriptedTrial {
    pub fn new(opt: Vec<f64>, constraint: Vec<f64>) -> Self {
        assert_eq!(opt.len(), constraint.len(), "one constraint value per iteration");
        assert!(!opt.is_empty(), "a trial needs at least one iteration");
        Self {
            opt,
            constraint,
            primary_cost: 1.0,
            constraint_cost: 1.0,
            start_phase: 0,
        }
    }

    pub fn costs(mut self, primary: f64, constraint: f64) -> Self {
        self.primary_cost = primary;
        self.constraint_cost = constraint;
        self
    }

    pub fn starting_at(mut self, phase: u32) -> Self {
        self.start_phase = phase;
        self
    }

    pub fn max_iterations(&self) -> u32 {
        self.opt.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTrial {
    pub trial_id: TrialId,
    pub interval: Option<u32>,
    /// Iteration at which the scheduler stopped the trial.
    pub stopped_at: Option<u32>,
    pub iterations_run: u32,
    /// Checkpoints whose constraint was evaluated, in call order.
    pub evaluated: Vec<u32>,
    pub decisions: Vec<SchedulerDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub trials: Vec<ReplayTrial>,
    /// Sum of every charged cost.
    pub total_cost: f64,
}

/// Replays `trials` against `scheduler`. Phase `k` runs iteration
/// `k - start_phase + 1` of every live trial, in trial order; trial `i` has
/// id `i` and is registered in the phase it starts.
pub fn replay<Sch: Scheduler<f64> + ?Sized>(scheduler: &mut Sch, trials: &[ScriptedTrial]) -> ReplayOutcome {
    let mut out: Vec<ReplayTrial> = trials
        .iter()
        .enumerate()
        .map(|(i, _)| ReplayTrial {
            trial_id: TrialId(i as u64),
            interval: None,
            stopped_at: None,
            iterations_run: 0,
            evaluated: Vec::new(),
            decisions: Vec::new(),
        })
        .collect();
    let last_phase = trials
        .iter()
        .map(|t| t.start_phase + t.max_iterations())
        .max()
        .unwrap_or(0);
    let mut clock = 0.0;
    let mut total_cost = 0.0;
    for phase in 0..last_phase {
        for (i, script) in trials.iter().enumerate() {
            let record = &mut out[i];
            if phase < script.start_phase || record.stopped_at.is_some() {
                continue;
            }
            let t = phase - script.start_phase + 1;
            if t > script.max_iterations() {
                continue;
            }
            if t == 1 {
                record.interval = scheduler.on_trial_start(record.trial_id, script.max_iterations());
            }
            clock += script.primary_cost;
            total_cost += script.primary_cost;
            let ctx = CheckpointContext {
                trial_id: record.trial_id,
                iteration: t,
                max_iterations: script.max_iterations(),
                opt_metric: script.opt[t as usize - 1],
                primary_cost: script.primary_cost,
                sim_time: clock,
            };
            let evaluated = &mut record.evaluated;
            let mut evaluate = |at: u32| {
                assert!(
                    (1..=t).contains(&at),
                    "constraint requested for future checkpoint {at} at {t}"
                );
                evaluated.push(at);
                clock += script.constraint_cost;
                total_cost += script.constraint_cost;
                ConstraintSample {
                    value: script.constraint[at as usize - 1],
                    cost: script.constraint_cost,
                }
            };
            let decision = scheduler.step(&ctx, &mut evaluate);
            record.iterations_run = t;
            record.decisions.push(decision);
            if decision.action == Action::Stop && t < script.max_iterations() {
                record.stopped_at = Some(t);
            }
        }
    }
    ReplayOutcome {
        trials: out,
        total_cost,
    }
}
