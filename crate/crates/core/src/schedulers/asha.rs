//! Asynchronous successive halving with a single bracket.
//!
//! Rungs sit at `grace * eta^k`. A trial reaching a rung is promoted on
//! arrival iff it ranks within the top `ceil(m / eta)` of the `m` results
//! recorded at that rung so far and fewer than `ceil(m / eta)` promotions have
//! been issued there. With `stratum_mode` the pool is split by checkpoint
//! group and ranked like stratum truncation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::cost_model::choose_interval;
use crate::num::Scalar;
use crate::trial_history::{CheckpointGroup, ConstraintSpec, CostLedger, TrialId};

use super::stratum::RankKey;
use super::{Action, CheckpointContext, ConstraintEvaluator, RankInfo, Scheduler, SchedulerDecision};

#[derive(Debug, Clone, PartialEq)]
pub struct AshaConfig<S> {
    pub reduction_factor: u32,
    pub grace_period: u32,
    pub max_time_units: u32,
    /// Rank within checkpoint groups and evaluate the constraint along the way.
    pub stratum_mode: bool,
    /// In stratum mode: evaluate at every rung (`true`), or pick between rungs
    /// and final-only evaluation from the cost ratio (`false`).
    pub constraint_interval_fixed: bool,
    /// Outside stratum mode: evaluate the constraint once when a trial ends.
    pub constraint_callback: bool,
    pub constraint: Option<ConstraintSpec<S>>,
}

impl<S: Scalar> AshaConfig<S> {
    pub const DEFAULT_REDUCTION_FACTOR: u32 = 4;
    pub const DEFAULT_GRACE_PERIOD: u32 = 1;

    pub fn new(max_time_units: u32) -> Self {
        Self {
            reduction_factor: Self::DEFAULT_REDUCTION_FACTOR,
            grace_period: Self::DEFAULT_GRACE_PERIOD,
            max_time_units,
            stratum_mode: false,
            constraint_interval_fixed: true,
            constraint_callback: false,
            constraint: None,
        }
    }

    pub fn with_callback(mut self, constraint: ConstraintSpec<S>) -> Self {
        self.constraint_callback = true;
        self.constraint = Some(constraint);
        self
    }

    pub fn with_stratum(mut self, constraint: ConstraintSpec<S>, interval_fixed: bool) -> Self {
        self.stratum_mode = true;
        self.constraint_interval_fixed = interval_fixed;
        self.constraint = Some(constraint);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.reduction_factor < 2 {
            return Err(format!("reduction_factor must be >= 2, got {}", self.reduction_factor));
        }
        if self.grace_period < 1 {
            return Err("grace_period must be >= 1".into());
        }
        if self.max_time_units < self.grace_period {
            return Err(format!(
                "max_time_units ({}) must be at least grace_period ({})",
                self.max_time_units, self.grace_period
            ));
        }
        if (self.stratum_mode || self.constraint_callback) && self.constraint.is_none() {
            return Err("constraint-aware ASHA needs a constraint threshold".into());
        }
        if self.stratum_mode && self.constraint_callback {
            return Err("stratum mode schedules its own constraint evaluations; drop the callback".into());
        }
        Ok(())
    }

    /// Probability a result is not promoted at a rung, used to pick the
    /// constraint cadence in stratum mode.
    fn stop_probability(&self) -> S {
        S::one() - S::one() / S::from_count(self.reduction_factor)
    }
}

/// Rung budgets `grace * eta^k` not exceeding `max_time_units`.
pub fn rung_levels(grace_period: u32, reduction_factor: u32, max_time_units: u32) -> Vec<u32> {
    let mut levels = Vec::new();
    let mut level = u64::from(grace_period.max(1));
    while level <= u64::from(max_time_units) {
        levels.push(level as u32);
        level *= u64::from(reduction_factor.max(2));
    }
    levels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cadence {
    Never,
    AtEnd,
    Rungs,
    FinalOnly,
}

#[derive(Debug, Clone, Copy)]
struct AshaTrial<S> {
    max_iterations: u32,
    cadence: Cadence,
    best_opt: S,
    best_iteration: u32,
}

#[derive(Debug, Clone, Default)]
struct RungPool<S> {
    results: Vec<RankKey<S>>,
    promoted: usize,
}

#[derive(Debug, Clone)]
pub struct AshaScheduler<S> {
    name: String,
    config: AshaConfig<S>,
    levels: Vec<u32>,
    rungs: BTreeMap<(u32, CheckpointGroup), RungPool<S>>,
    trials: HashMap<TrialId, AshaTrial<S>>,
    ledger: CostLedger<S>,
}

impl<S: Scalar> AshaScheduler<S> {
    pub fn new(config: AshaConfig<S>) -> Result<Self, String> {
        config.validate()?;
        let name = match (
            config.stratum_mode,
            config.constraint_interval_fixed,
            config.constraint_callback,
        ) {
            (true, true, _) => "asha-stratum",
            (true, false, _) => "asha-stratum-not-fixed",
            (false, _, true) => "asha-callback",
            (false, _, false) => "asha",
        };
        Ok(Self {
            name: name.to_owned(),
            levels: rung_levels(config.grace_period, config.reduction_factor, config.max_time_units),
            config,
            rungs: BTreeMap::new(),
            trials: HashMap::new(),
            ledger: CostLedger::new(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// `(results recorded, promotions issued)` at a rung, summed over groups.
    pub fn rung_counts(&self, level: u32) -> (usize, usize) {
        self.rungs
            .range((level, CheckpointGroup::NoConstraint)..=(level, CheckpointGroup::Invalid))
            .fold((0, 0), |(m, p), (_, pool)| (m + pool.results.len(), p + pool.promoted))
    }

    /// `(group, results, promotions)` for each pool at a rung. Outside
    /// stratum mode there is one pool, filed under `NoConstraint`.
    pub fn pool_counts(&self, level: u32) -> Vec<(CheckpointGroup, usize, usize)> {
        self.rungs
            .range((level, CheckpointGroup::NoConstraint)..=(level, CheckpointGroup::Invalid))
            .map(|(&(_, group), pool)| (group, pool.results.len(), pool.promoted))
            .collect()
    }

    fn classify(&self, value: Option<S>) -> (CheckpointGroup, Option<S>) {
        match (value, self.config.constraint.as_ref()) {
            (Some(v), Some(c)) => match c.violation(v) {
                Some(amount) => (CheckpointGroup::Invalid, Some(amount)),
                None => (CheckpointGroup::Valid, None),
            },
            _ => (CheckpointGroup::NoConstraint, None),
        }
    }

    /// Records a rung result and returns the promotion verdict.
    fn arrive(&mut self, level: u32, group: CheckpointGroup, key: RankKey<S>, is_last: bool) -> (Action, RankInfo) {
        let pool_group = if self.config.stratum_mode {
            group
        } else {
            CheckpointGroup::NoConstraint
        };
        let eta = self.config.reduction_factor as usize;
        let pool = self.rungs.entry((level, pool_group)).or_default();
        pool.results.push(key);
        let m = pool.results.len();
        let better = pool
            .results
            .iter()
            .filter(|other| other.compare(&key, pool_group) == Ordering::Less)
            .count();
        let rank_from_best = better + 1;
        let quota = m.div_ceil(eta);
        let action = if is_last {
            Action::Continue
        } else if rank_from_best <= quota && pool.promoted < quota {
            pool.promoted += 1;
            Action::Continue
        } else {
            Action::Stop
        };
        let info = RankInfo {
            group: pool_group,
            rank_from_worst: m - rank_from_best + 1,
            group_size: m,
        };
        (action, info)
    }
}

impl<S: Scalar> Scheduler<S> for AshaScheduler<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn on_trial_start(&mut self, trial: TrialId, max_iterations: u32) -> Option<u32> {
        let max_iterations = max_iterations.max(1);
        let cadence = if self.config.stratum_mode {
            if self.config.constraint_interval_fixed {
                Cadence::Rungs
            } else {
                match self.ledger.cost_ratio() {
                    None => Cadence::FinalOnly,
                    Some(r) => match choose_interval(r, self.config.stop_probability(), max_iterations) {
                        Ok(1) => Cadence::Rungs,
                        _ => Cadence::FinalOnly,
                    },
                }
            }
        } else if self.config.constraint_callback {
            Cadence::AtEnd
        } else {
            Cadence::Never
        };
        self.trials.insert(
            trial,
            AshaTrial {
                max_iterations,
                cadence,
                best_opt: S::infinity(),
                best_iteration: 1,
            },
        );
        match cadence {
            Cadence::Rungs => Some(1),
            Cadence::FinalOnly => Some(max_iterations),
            Cadence::Never | Cadence::AtEnd => None,
        }
    }

    fn step(
        &mut self,
        ctx: &CheckpointContext<S>,
        evaluate_constraint: &mut ConstraintEvaluator<'_, S>,
    ) -> SchedulerDecision {
        if !self.trials.contains_key(&ctx.trial_id) {
            self.on_trial_start(ctx.trial_id, ctx.max_iterations);
        }
        let trial = self.trials.get_mut(&ctx.trial_id).expect("registered above");
        if ctx.opt_metric < trial.best_opt {
            trial.best_opt = ctx.opt_metric;
            trial.best_iteration = ctx.iteration;
        }
        let trial = *trial;
        self.ledger.charge_primary(ctx.primary_cost);

        let is_last = ctx.iteration >= trial.max_iterations;
        let at_rung = self.levels.binary_search(&ctx.iteration).is_ok();

        let checkpoint = match trial.cadence {
            Cadence::Rungs if at_rung || is_last => Some(ctx.iteration),
            Cadence::FinalOnly if is_last => Some(trial.best_iteration),
            _ => None,
        };
        let mut evaluated = false;
        let mut value = None;
        if let Some(at) = checkpoint {
            let sample = evaluate_constraint(at);
            self.ledger.charge_constraint(sample.cost);
            evaluated = true;
            value = Some(sample.value);
        }

        let (action, rank) = if at_rung {
            let (group, violation) = self.classify(value);
            let key = RankKey {
                violation,
                opt_metric: ctx.opt_metric,
                trial_id: ctx.trial_id,
            };
            let (action, info) = self.arrive(ctx.iteration, group, key, is_last);
            (action, Some(info))
        } else {
            (Action::Continue, None)
        };

        if trial.cadence == Cadence::AtEnd && (is_last || action == Action::Stop) {
            let sample = evaluate_constraint(ctx.iteration);
            self.ledger.charge_constraint(sample.cost);
            evaluated = true;
        }

        SchedulerDecision {
            action,
            evaluate_constraint: evaluated,
            rank,
        }
    }

    fn needs_post_hoc_scan(&self) -> bool {
        !self.config.stratum_mode && !self.config.constraint_callback
    }
}
