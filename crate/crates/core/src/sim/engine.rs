//! Event loop: bounded concurrency, a simulated clock and scheduler callbacks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::rng::mix_key;
use crate::schedulers::{
    post_hoc_feasibility_scan, Action, CheckpointContext, ConstraintSample, ScanCandidate, Scheduler,
};
use crate::search_space::Configuration;
use crate::trial_history::{CheckpointGroup, ConstraintSpec, TrialId};

use super::curve::{Meter, TrialCurve};
use super::problem::{MetricDirection, Problem};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    /// Simulated time after which no new work is issued.
    pub budget: f64,
    pub max_concurrent: usize,
    pub search_seed: u64,
}

impl SimSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(SimError::InvalidSettings(format!(
                "budget must be positive, got {}",
                self.budget
            )));
        }
        if self.max_concurrent == 0 {
            return Err(SimError::InvalidSettings("max_concurrent must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceAction {
    Continue,
    Stop,
    Complete,
    /// Evaluation made by the feasibility scan after tuning.
    PostHoc,
}

impl TraceAction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Continue => "continue",
            Self::Stop => "stop",
            Self::Complete => "complete",
            Self::PostHoc => "post-hoc",
        }
    }
}

/// One processed checkpoint (or one scan evaluation).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    /// Clock of the trial once the step, including any constraint
    /// evaluation, has finished.
    pub sim_time: f64,
    pub trial_id: u64,
    pub iteration: u32,
    /// Minimized optimization metric at `iteration`.
    pub opt_metric: f64,
    pub action: TraceAction,
    pub interval: Option<u32>,
    /// Checkpoint whose constraint was evaluated in this step.
    pub constraint_checkpoint: Option<u32>,
    /// Minimized optimization metric at `constraint_checkpoint`.
    pub checkpoint_opt_metric: Option<f64>,
    pub constraint_value: Option<f64>,
    pub group: CheckpointGroup,
    pub violation_amount: Option<f64>,
    pub rank_from_worst: Option<usize>,
    pub group_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Completed,
    Stopped,
    /// Cut off because the budget ran out.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial_id: u64,
    pub max_iterations: u32,
    pub iterations_run: u32,
    pub status: TrialStatus,
    pub interval: Option<u32>,
    /// Best minimized optimization metric and where it was reached.
    pub best_opt_metric: f64,
    pub best_iteration: u32,
    pub constraint_evaluations: u32,
    pub start_time: f64,
    pub end_time: f64,
    pub primary_cost: f64,
    pub constraint_cost: f64,
    pub configuration: Configuration,
}

/// How many trials got each constraint evaluation interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IntervalTally {
    pub beta_one: usize,
    pub beta_max: usize,
    pub other: usize,
    /// Trials whose policy has no interval.
    pub none: usize,
}

impl IntervalTally {
    fn add(&mut self, interval: Option<u32>, max_iterations: u32) {
        match interval {
            None => self.none += 1,
            Some(1) => self.beta_one += 1,
            Some(b) if b >= max_iterations => self.beta_max += 1,
            Some(_) => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.beta_one + self.beta_max + self.other + self.none
    }

    /// Share of trials with an interval that got `beta = 1`.
    pub fn beta_one_fraction(&self) -> Option<f64> {
        let with_interval = self.beta_one + self.beta_max + self.other;
        (with_interval > 0).then(|| self.beta_one as f64 / with_interval as f64)
    }

    pub fn beta_max_fraction(&self) -> Option<f64> {
        let with_interval = self.beta_one + self.beta_max + self.other;
        (with_interval > 0).then(|| self.beta_max as f64 / with_interval as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub scheduler: String,
    pub problem: String,
    pub search_seed: u64,
    pub direction: MetricDirection,
    pub constraint_threshold: f64,
    pub feasible_found: bool,
    /// In the problem's own direction.
    pub best_feasible_score: Option<f64>,
    pub best_feasible_trial: Option<u64>,
    pub best_feasible_iteration: Option<u32>,
    /// When the best feasible checkpoint was certified by a constraint
    /// evaluation, scan included.
    pub time_to_best: Option<f64>,
    pub total_trials: usize,
    pub completed_trials: usize,
    pub stopped_trials: usize,
    /// Every constraint evaluation, scan included.
    pub constraint_evaluations: u64,
    pub post_hoc_evaluations: u64,
    pub interval_tally: IntervalTally,
    /// Mean constraint cost over mean iteration cost, tuning only.
    pub measured_cost_ratio: Option<f64>,
    /// Time when the last trial finished, plus the scan.
    pub elapsed_time: f64,
    pub total_primary_cost: f64,
    pub total_constraint_cost: f64,
    #[serde(skip)]
    pub trials: Vec<TrialSummary>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl ExperimentReport {
    /// Sum of every charged cost.
    pub fn total_cost(&self) -> f64 {
        self.total_primary_cost + self.total_constraint_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    seq: u64,
    slot: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct RunningTrial {
    id: u64,
    key: u64,
    config: Configuration,
    curve: TrialCurve,
    meter: Meter,
    interval: Option<u32>,
    iteration: u32,
    pending_opt: f64,
    opt_history: Vec<f64>,
    evaluations: u32,
    start_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Certified {
    opt: f64,
    time: f64,
    trial: u64,
    iteration: u32,
}

impl Certified {
    fn beats(&self, other: &Option<Certified>) -> bool {
        match other {
            None => true,
            Some(o) => (self.opt, self.time, self.trial) < (o.opt, o.time, o.trial),
        }
    }
}

struct Finished {
    curve: TrialCurve,
    key: u64,
}

struct Loop<'a, Sch: ?Sized> {
    problem: &'a Problem,
    scheduler: &'a mut Sch,
    settings: SimSettings,
    constraint: ConstraintSpec<f64>,
    queue: BinaryHeap<Event>,
    seq: u64,
    slots: Vec<Option<RunningTrial>>,
    next_index: u64,
    tally: IntervalTally,
    trace: Vec<TraceRow>,
    summaries: Vec<TrialSummary>,
    finished: Vec<Finished>,
    best: Option<Certified>,
    primary_cost: f64,
    constraint_cost: f64,
    primary_count: u64,
    constraint_count: u64,
    makespan: f64,
}

impl<Sch: Scheduler<f64> + ?Sized> Loop<'_, Sch> {
    fn push(&mut self, time: f64, slot: usize) {
        self.queue.push(Event {
            time,
            seq: self.seq,
            slot,
        });
        self.seq += 1;
    }

    fn start_trial(&mut self, slot: usize, time: f64) -> Result<(), SimError> {
        if time >= self.settings.budget {
            return Ok(());
        }
        let id = self.next_index;
        self.next_index += 1;
        let config = self.problem.space().configuration_at(self.settings.search_seed, id);
        let key = mix_key(&[self.problem.spec().problem_seed, self.settings.search_seed, id]);
        let curve = self.problem.curve_for(&config, key);
        curve.validate()?;
        let interval = self.scheduler.on_trial_start(TrialId(id), curve.max_iterations);
        self.tally.add(interval, curve.max_iterations);
        let mut meter = Meter::starting_at(time);
        let pending_opt = meter.eval_opt_metric(&curve, 1, key)?;
        let done = meter.clock();
        self.slots[slot] = Some(RunningTrial {
            id,
            key,
            config,
            curve,
            meter,
            interval,
            iteration: 0,
            pending_opt,
            opt_history: Vec::with_capacity(curve.max_iterations as usize),
            evaluations: 0,
            start_time: time,
        });
        self.push(done, slot);
        Ok(())
    }

    fn process(&mut self, slot: usize) -> Result<(), SimError> {
        let mut trial = self.slots[slot].take().expect("events only target occupied slots");
        let direction = self.problem.direction();
        trial.iteration += 1;
        let t = trial.iteration;
        let opt = direction.internal(trial.pending_opt);
        trial.opt_history.push(opt);
        let ctx = CheckpointContext {
            trial_id: TrialId(trial.id),
            iteration: t,
            max_iterations: trial.curve.max_iterations,
            opt_metric: opt,
            primary_cost: trial.curve.primary_cost,
            sim_time: trial.meter.clock(),
        };

        let mut evaluations: Vec<(u32, f64, f64)> = Vec::new();
        let mut failure = None;
        let decision = {
            let RunningTrial { meter, curve, key, .. } = &mut trial;
            let mut evaluate = |at: u32| {
                let value = if at > t {
                    Err(SimError::IterationOutOfRange {
                        iteration: at,
                        max_iterations: t,
                    })
                } else {
                    meter.eval_constraint_metric(curve, at, *key)
                };
                match value {
                    Ok(value) => {
                        evaluations.push((at, value, meter.clock()));
                        ConstraintSample {
                            value,
                            cost: curve.constraint_cost,
                        }
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        ConstraintSample {
                            value: f64::NAN,
                            cost: 0.0,
                        }
                    }
                }
            };
            self.scheduler.step(&ctx, &mut evaluate)
        };
        if let Some(e) = failure {
            return Err(e);
        }

        trial.evaluations += evaluations.len() as u32;
        for &(at, value, time) in &evaluations {
            if self.constraint.is_satisfied(value) {
                let candidate = Certified {
                    opt: trial.opt_history[at as usize - 1],
                    time,
                    trial: trial.id,
                    iteration: at,
                };
                if candidate.beats(&self.best) {
                    self.best = Some(candidate);
                }
            }
        }

        let is_last = t >= trial.curve.max_iterations;
        let action = if is_last {
            TraceAction::Complete
        } else if decision.action == Action::Stop {
            TraceAction::Stop
        } else {
            TraceAction::Continue
        };
        let last_eval = evaluations.last().copied();
        let violation = last_eval.and_then(|(_, v, _)| self.constraint.violation(v));
        let group = match last_eval {
            None => CheckpointGroup::NoConstraint,
            Some(_) if violation.is_some() => CheckpointGroup::Invalid,
            Some(_) => CheckpointGroup::Valid,
        };
        self.trace.push(TraceRow {
            sim_time: trial.meter.clock(),
            trial_id: trial.id,
            iteration: t,
            opt_metric: opt,
            action,
            interval: trial.interval,
            constraint_checkpoint: last_eval.map(|(at, _, _)| at),
            checkpoint_opt_metric: last_eval.map(|(at, _, _)| trial.opt_history[at as usize - 1]),
            constraint_value: last_eval.map(|(_, v, _)| v),
            group,
            violation_amount: violation,
            rank_from_worst: decision.rank.map(|r| r.rank_from_worst),
            group_size: decision.rank.map(|r| r.group_size),
        });

        let status = match action {
            TraceAction::Complete => Some(TrialStatus::Completed),
            TraceAction::Stop => Some(TrialStatus::Stopped),
            _ if trial.meter.clock() >= self.settings.budget => Some(TrialStatus::BudgetExhausted),
            _ => None,
        };
        match status {
            None => {
                trial.pending_opt = trial.meter.eval_opt_metric(&trial.curve, t + 1, trial.key)?;
                let done = trial.meter.clock();
                self.slots[slot] = Some(trial);
                self.push(done, slot);
            }
            Some(status) => {
                let end = trial.meter.clock();
                self.finish(trial, status);
                self.start_trial(slot, end)?;
            }
        }
        Ok(())
    }

    fn finish(&mut self, trial: RunningTrial, status: TrialStatus) {
        let (best_index, best_opt) = trial
            .opt_history
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let ledger = trial.meter.ledger();
        self.primary_cost += ledger.total_primary_cost();
        self.constraint_cost += ledger.total_constraint_cost();
        self.primary_count += ledger.primary_cost_count();
        self.constraint_count += ledger.constraint_cost_count();
        self.makespan = self.makespan.max(trial.meter.clock());
        self.summaries.push(TrialSummary {
            trial_id: trial.id,
            max_iterations: trial.curve.max_iterations,
            iterations_run: trial.iteration,
            status,
            interval: trial.interval,
            best_opt_metric: best_opt,
            best_iteration: best_index as u32 + 1,
            constraint_evaluations: trial.evaluations,
            start_time: trial.start_time,
            end_time: trial.meter.clock(),
            primary_cost: trial.curve.primary_cost,
            constraint_cost: trial.curve.constraint_cost,
            configuration: trial.config,
        });
        let index = trial.id as usize;
        if self.finished.len() <= index {
            self.finished.resize_with(index + 1, || Finished {
                curve: trial.curve,
                key: 0,
            });
        }
        self.finished[index] = Finished {
            curve: trial.curve,
            key: trial.key,
        };
    }

    /// Evaluates best checkpoints after tuning until one is feasible.
    /// Returns the number of evaluations and their cost.
    fn post_hoc_scan(&mut self) -> Result<(u64, f64), SimError> {
        let mut candidates: Vec<ScanCandidate<f64>> = self
            .summaries
            .iter()
            .map(|s| ScanCandidate {
                trial_id: TrialId(s.trial_id),
                best_iteration: s.best_iteration,
                best_opt_metric: s.best_opt_metric,
            })
            .collect();
        candidates.sort_by_key(|c| c.trial_id);
        let mut clock = self.makespan;
        let mut failure = None;
        let mut rows = Vec::new();
        let finished = &self.finished;
        let constraint = self.constraint;
        let scan = post_hoc_feasibility_scan(&candidates, &constraint, |c| {
            let Finished { curve, key } = &finished[c.trial_id.0 as usize];
            match curve.constraint_metric(c.best_iteration, *key) {
                Ok(value) => {
                    clock += curve.constraint_cost;
                    let violation = constraint.violation(value);
                    rows.push(TraceRow {
                        sim_time: clock,
                        trial_id: c.trial_id.0,
                        iteration: c.best_iteration,
                        opt_metric: c.best_opt_metric,
                        action: TraceAction::PostHoc,
                        interval: None,
                        constraint_checkpoint: Some(c.best_iteration),
                        checkpoint_opt_metric: Some(c.best_opt_metric),
                        constraint_value: Some(value),
                        group: if violation.is_some() {
                            CheckpointGroup::Invalid
                        } else {
                            CheckpointGroup::Valid
                        },
                        violation_amount: violation,
                        rank_from_worst: None,
                        group_size: None,
                    });
                    ConstraintSample {
                        value,
                        cost: curve.constraint_cost,
                    }
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    ConstraintSample {
                        value: f64::NAN,
                        cost: 0.0,
                    }
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if let (Some(found), Some(row)) = (scan.best_feasible, rows.last()) {
            let candidate = Certified {
                opt: found.candidate.best_opt_metric,
                time: row.sim_time,
                trial: found.candidate.trial_id.0,
                iteration: found.candidate.best_iteration,
            };
            if candidate.beats(&self.best) {
                self.best = Some(candidate);
            }
        }
        self.trace.extend(rows);
        Ok((scan.evaluations() as u64, scan.cost))
    }
}

/// Runs one tuning experiment and reports what it found.
///
/// Up to `max_concurrent` trials run at once, each on its own clock. Trial
/// `i` uses configuration `i` of the search seed's stream. A trial that
/// finishes or stops frees its slot for the next configuration; nothing new
/// starts once the clock reaches the budget, and a running trial stops
/// training at its first checkpoint past the budget. Policies that never
/// look at the constraint get a feasibility scan after tuning, whose cost
/// adds to the elapsed time.
pub fn run_experiment<Sch>(
    problem: &Problem,
    scheduler: &mut Sch,
    settings: &SimSettings,
) -> Result<ExperimentReport, SimError>
where
    Sch: Scheduler<f64> + ?Sized,
{
    settings.validate()?;
    let constraint =
        ConstraintSpec::new(problem.constraint_threshold()).map_err(|e| SimError::InvalidProblem(e.to_string()))?;
    let mut state = Loop {
        problem,
        scheduler,
        settings: *settings,
        constraint,
        queue: BinaryHeap::new(),
        seq: 0,
        slots: vec![None; settings.max_concurrent],
        next_index: 0,
        tally: IntervalTally::default(),
        trace: Vec::new(),
        summaries: Vec::new(),
        finished: Vec::new(),
        best: None,
        primary_cost: 0.0,
        constraint_cost: 0.0,
        primary_count: 0,
        constraint_count: 0,
        makespan: 0.0,
    };
    for slot in 0..settings.max_concurrent {
        state.start_trial(slot, 0.0)?;
    }
    while let Some(event) = state.queue.pop() {
        state.process(event.slot)?;
    }

    let measured_cost_ratio = (state.primary_count > 0 && state.constraint_count > 0).then(|| {
        (state.constraint_cost / state.constraint_count as f64) / (state.primary_cost / state.primary_count as f64)
    });
    let tuning_evaluations = state.constraint_count;
    let (post_hoc_evaluations, scan_cost) = if state.scheduler.needs_post_hoc_scan() {
        state.post_hoc_scan()?
    } else {
        (0, 0.0)
    };

    let direction = problem.direction();
    let mut summaries = std::mem::take(&mut state.summaries);
    summaries.sort_by_key(|s| s.trial_id);
    let count = |status| summaries.iter().filter(|s| s.status == status).count();
    Ok(ExperimentReport {
        scheduler: state.scheduler.name().to_owned(),
        problem: problem.spec().name.clone(),
        search_seed: settings.search_seed,
        direction,
        constraint_threshold: problem.constraint_threshold(),
        feasible_found: state.best.is_some(),
        best_feasible_score: state.best.map(|b| direction.natural(b.opt)),
        best_feasible_trial: state.best.map(|b| b.trial),
        best_feasible_iteration: state.best.map(|b| b.iteration),
        time_to_best: state.best.map(|b| b.time),
        total_trials: summaries.len(),
        completed_trials: count(TrialStatus::Completed),
        stopped_trials: count(TrialStatus::Stopped),
        constraint_evaluations: tuning_evaluations + post_hoc_evaluations,
        post_hoc_evaluations,
        interval_tally: state.tally,
        measured_cost_ratio,
        elapsed_time: state.makespan + scan_cost,
        total_primary_cost: state.primary_cost,
        total_constraint_cost: state.constraint_cost + scan_cost,
        trials: summaries,
        trace: std::mem::take(&mut state.trace),
    })
}
