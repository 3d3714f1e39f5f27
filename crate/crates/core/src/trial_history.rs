//! Running history of checkpoints shared by all trials of a tuning run.
//!
//! Metrics are minimized. Each checkpoint lands in one of three groups:
//! no constraint evaluated, evaluated and feasible, evaluated and violated.
//! The history keeps the global best feasible score `f*` and a ledger of the
//! primary and constraint costs observed so far.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

/// Opaque trial identifier; trials are numbered in the order they start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrialId(pub u64);

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointGroup {
    NoConstraint,
    Valid,
    Invalid,
}

impl CheckpointGroup {
    pub const ALL: [CheckpointGroup; 3] = [Self::NoConstraint, Self::Valid, Self::Invalid];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoConstraint => "no-constraint",
            Self::Valid => "valid",
            Self::Invalid => "invalid",
        }
    }
}

impl fmt::Display for CheckpointGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HistoryError {
    #[error("constraint threshold must be finite, got {0}")]
    NonFiniteThreshold(f64),
    #[error("trial {trial} iteration {iteration}: {reason}")]
    InconsistentRecord {
        trial: TrialId,
        iteration: u32,
        reason: &'static str,
    },
}

/// Upper-bound constraint `g <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSpec<S> {
    threshold: S,
}

impl<S: Scalar> ConstraintSpec<S> {
    pub fn new(threshold: S) -> Result<Self, HistoryError> {
        if threshold.is_finite() {
            Ok(Self { threshold })
        } else {
            Err(HistoryError::NonFiniteThreshold(threshold.as_f64()))
        }
    }

    pub fn threshold(&self) -> S {
        self.threshold
    }

    pub fn is_satisfied(&self, value: S) -> bool {
        value <= self.threshold
    }

    /// Amount by which `value` exceeds the threshold, if it does.
    pub fn violation(&self, value: S) -> Option<S> {
        (value > self.threshold).then(|| value - self.threshold)
    }
}

/// One trial's state at one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord<S> {
    pub trial_id: TrialId,
    pub iteration: u32,
    pub opt_metric: S,
    pub constraint_value: Option<S>,
    pub group: CheckpointGroup,
    pub violation_amount: Option<S>,
    pub sim_time: S,
}

impl<S: Scalar> CheckpointRecord<S> {
    /// Classifies a checkpoint against `constraint`.
    pub fn observe(
        trial_id: TrialId,
        iteration: u32,
        opt_metric: S,
        constraint_value: Option<S>,
        constraint: &ConstraintSpec<S>,
        sim_time: S,
    ) -> Self {
        let (group, violation_amount) = match constraint_value {
            None => (CheckpointGroup::NoConstraint, None),
            Some(value) => match constraint.violation(value) {
                None => (CheckpointGroup::Valid, None),
                Some(amount) => (CheckpointGroup::Invalid, Some(amount)),
            },
        };
        Self {
            trial_id,
            iteration,
            opt_metric,
            constraint_value,
            group,
            violation_amount,
            sim_time,
        }
    }

    fn inconsistent(&self, reason: &'static str) -> HistoryError {
        HistoryError::InconsistentRecord {
            trial: self.trial_id,
            iteration: self.iteration,
            reason,
        }
    }

    /// Checks the group invariants against `constraint`.
    pub fn validate(&self, constraint: &ConstraintSpec<S>) -> Result<(), HistoryError> {
        if self.iteration == 0 {
            return Err(self.inconsistent("iterations start at 1"));
        }
        if self.opt_metric.is_nan() {
            return Err(self.inconsistent("optimization metric is NaN"));
        }
        match (self.group, self.constraint_value) {
            (CheckpointGroup::NoConstraint, None) => {
                if self.violation_amount.is_some() {
                    return Err(self.inconsistent("no-constraint record carries a violation"));
                }
            }
            (CheckpointGroup::NoConstraint, Some(_)) => {
                return Err(self.inconsistent("no-constraint record carries a constraint value"))
            }
            (_, None) => return Err(self.inconsistent("evaluated record lacks a constraint value")),
            (CheckpointGroup::Valid, Some(value)) => {
                if !constraint.is_satisfied(value) {
                    return Err(self.inconsistent("valid record exceeds the threshold"));
                }
                if self.violation_amount.is_some() {
                    return Err(self.inconsistent("valid record carries a violation"));
                }
            }
            (CheckpointGroup::Invalid, Some(value)) => {
                let expected = constraint
                    .violation(value)
                    .ok_or_else(|| self.inconsistent("invalid record satisfies the threshold"))?;
                if self.violation_amount != Some(expected) {
                    return Err(self.inconsistent("violation amount differs from value - threshold"));
                }
            }
        }
        Ok(())
    }
}

/// Running sums of primary (per-iteration) and constraint (per-evaluation) cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostLedger<S> {
    total_primary_cost: S,
    primary_cost_count: u64,
    total_constraint_cost: S,
    constraint_cost_count: u64,
}

impl<S: Scalar> CostLedger<S> {
    pub fn new() -> Self {
        Self {
            total_primary_cost: S::zero(),
            primary_cost_count: 0,
            total_constraint_cost: S::zero(),
            constraint_cost_count: 0,
        }
    }

    pub fn charge_primary(&mut self, cost: S) {
        self.total_primary_cost = self.total_primary_cost + cost;
        self.primary_cost_count += 1;
    }

    pub fn charge_constraint(&mut self, cost: S) {
        self.total_constraint_cost = self.total_constraint_cost + cost;
        self.constraint_cost_count += 1;
    }

    pub fn total_primary_cost(&self) -> S {
        self.total_primary_cost
    }

    pub fn primary_cost_count(&self) -> u64 {
        self.primary_cost_count
    }

    pub fn total_constraint_cost(&self) -> S {
        self.total_constraint_cost
    }

    pub fn constraint_cost_count(&self) -> u64 {
        self.constraint_cost_count
    }

    pub fn total_cost(&self) -> S {
        self.total_primary_cost + self.total_constraint_cost
    }

    /// Average constraint cost over average primary cost; `None` until both
    /// streams have at least one sample.
    pub fn cost_ratio(&self) -> Option<S> {
        if self.primary_cost_count == 0 || self.constraint_cost_count == 0 {
            return None;
        }
        let constraint = self.total_constraint_cost / S::from_u64(self.constraint_cost_count)?;
        let primary = self.total_primary_cost / S::from_u64(self.primary_cost_count)?;
        (primary > S::zero()).then(|| constraint / primary)
    }
}

/// A trial's standing in the group of its most recent checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStanding<S> {
    pub trial_id: TrialId,
    pub group: CheckpointGroup,
    /// Best optimization metric the trial has reached so far.
    pub best_opt_metric: S,
    /// Violation of the latest checkpoint, when that checkpoint was invalid.
    pub violation_amount: Option<S>,
    pub latest_iteration: u32,
}

/// Append-only checkpoint log with `f*` and the cost ledger.
#[derive(Debug, Clone)]
pub struct RunningHistory<S> {
    constraint: ConstraintSpec<S>,
    records: Vec<CheckpointRecord<S>>,
    best_feasible_score: S,
    ledger: CostLedger<S>,
    standings: BTreeMap<TrialId, TrialStanding<S>>,
}

impl<S: Scalar> RunningHistory<S> {
    pub fn new(constraint: ConstraintSpec<S>) -> Self {
        Self {
            constraint,
            records: Vec::new(),
            best_feasible_score: S::infinity(),
            ledger: CostLedger::new(),
            standings: BTreeMap::new(),
        }
    }

    pub fn constraint(&self) -> &ConstraintSpec<S> {
        &self.constraint
    }

    pub fn records(&self) -> &[CheckpointRecord<S>] {
        &self.records
    }

    /// `f*`: the smallest optimization metric over valid records, `+inf` if none.
    pub fn best_feasible_score(&self) -> S {
        self.best_feasible_score
    }

    pub fn ledger(&self) -> &CostLedger<S> {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut CostLedger<S> {
        &mut self.ledger
    }

    pub fn standing(&self, trial: TrialId) -> Option<&TrialStanding<S>> {
        self.standings.get(&trial)
    }

    /// Appends a record, updating `f*` and the trial's standing.
    pub fn record_checkpoint(&mut self, record: CheckpointRecord<S>) -> Result<(), HistoryError> {
        record.validate(&self.constraint)?;
        if record.group == CheckpointGroup::Valid && record.opt_metric < self.best_feasible_score {
            self.best_feasible_score = record.opt_metric;
        }
        let standing = self.standings.entry(record.trial_id).or_insert(TrialStanding {
            trial_id: record.trial_id,
            group: record.group,
            best_opt_metric: record.opt_metric,
            violation_amount: None,
            latest_iteration: record.iteration,
        });
        standing.group = record.group;
        standing.violation_amount = record.violation_amount;
        standing.latest_iteration = record.iteration;
        if record.opt_metric < standing.best_opt_metric {
            standing.best_opt_metric = record.opt_metric;
        }
        self.records.push(record);
        Ok(())
    }

    /// Records of `group` in insertion order. With `latest_per_trial`, only the
    /// most recent record each trial has in that group is kept.
    pub fn group_subset(&self, group: CheckpointGroup, latest_per_trial: bool) -> Vec<&CheckpointRecord<S>> {
        if !latest_per_trial {
            return self.records.iter().filter(|r| r.group == group).collect();
        }
        let mut latest: BTreeMap<TrialId, usize> = BTreeMap::new();
        for (index, record) in self.records.iter().enumerate() {
            if record.group == group {
                latest.insert(record.trial_id, index);
            }
        }
        let mut indices: Vec<usize> = latest.into_values().collect();
        indices.sort_unstable();
        indices.into_iter().map(|i| &self.records[i]).collect()
    }

    /// Ranking population of `group`: every trial whose most recent
    /// checkpoint is in that group, ordered by trial id.
    pub fn standings_in(&self, group: CheckpointGroup) -> impl Iterator<Item = &TrialStanding<S>> + '_ {
        self.standings.values().filter(move |s| s.group == group)
    }

    pub fn trial_count(&self) -> usize {
        self.standings.len()
    }
}
