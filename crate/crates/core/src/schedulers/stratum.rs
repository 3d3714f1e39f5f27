//! Stratum truncation: rank a trial only against trials of its own group and
//! stop it when it falls in the bottom fraction of that group.

use std::cmp::Ordering;

use crate::num::Scalar;
use crate::trial_history::{CheckpointGroup, RunningHistory, TrialId, TrialStanding};

use super::{Action, RankInfo};

/// Slack absorbing decimal-fraction rounding in `P * n` (e.g. `0.29 * 100`).
const COUNT_SLACK: f64 = 1e-9;

/// Number of trials to cut from an `n`-trial group: `floor(P * n)`.
pub fn stratum_stop_count<S: Scalar>(truncation: S, n: usize) -> usize {
    let cut = truncation.as_f64() * n as f64 + COUNT_SLACK;
    (cut.floor().max(0.0) as usize).min(n)
}

/// Sort key of a ranking entry; smaller is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RankKey<S> {
    pub violation: Option<S>,
    pub opt_metric: S,
    pub trial_id: TrialId,
}

impl<S: Scalar> RankKey<S> {
    pub fn from_standing(standing: &TrialStanding<S>) -> Self {
        Self {
            violation: standing.violation_amount,
            opt_metric: standing.best_opt_metric,
            trial_id: standing.trial_id,
        }
    }

    /// Invalid entries order by violation first, metric second; other groups
    /// by metric. Trial id breaks remaining ties.
    pub fn compare(&self, other: &Self, group: CheckpointGroup) -> Ordering {
        let by_metric = || {
            self.opt_metric
                .partial_cmp(&other.opt_metric)
                .unwrap_or(Ordering::Equal)
        };
        let primary = if group == CheckpointGroup::Invalid {
            let zero = S::zero();
            self.violation
                .unwrap_or(zero)
                .partial_cmp(&other.violation.unwrap_or(zero))
                .unwrap_or(Ordering::Equal)
                .then_with(by_metric)
        } else {
            by_metric()
        };
        primary.then(self.trial_id.cmp(&other.trial_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRank {
    /// 1 is the worst trial of the group.
    pub rank_from_worst: usize,
    pub group_size: usize,
}

/// Rank of `trial` among the trials whose latest checkpoint is in `group`.
pub fn group_rank<S: Scalar>(history: &RunningHistory<S>, trial: TrialId, group: CheckpointGroup) -> Option<GroupRank> {
    let own = history.standing(trial).filter(|s| s.group == group)?;
    let own = RankKey::from_standing(own);
    let mut group_size = 0;
    let mut worse = 0;
    for standing in history.standings_in(group) {
        group_size += 1;
        if RankKey::from_standing(standing).compare(&own, group) == Ordering::Greater {
            worse += 1;
        }
    }
    Some(GroupRank {
        rank_from_worst: worse + 1,
        group_size,
    })
}

/// Stops `trial` iff it is among the `floor(P * n)` worst of its group.
pub fn stratum_should_stop<S: Scalar>(
    truncation: S,
    history: &RunningHistory<S>,
    trial: TrialId,
    group: CheckpointGroup,
) -> (Action, Option<RankInfo>) {
    let Some(rank) = group_rank(history, trial, group) else {
        return (Action::Continue, None);
    };
    let action = if rank.rank_from_worst <= stratum_stop_count(truncation, rank.group_size) {
        Action::Stop
    } else {
        Action::Continue
    };
    let info = RankInfo {
        group,
        rank_from_worst: rank.rank_from_worst,
        group_size: rank.group_size,
    };
    (action, Some(info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_history::{CheckpointRecord, ConstraintSpec};

    fn history_with(entries: &[(u64, f64, Option<f64>)]) -> RunningHistory<f64> {
        let mut h = RunningHistory::new(ConstraintSpec::new(0.0).unwrap());
        for &(trial, opt, g) in entries {
            let r = CheckpointRecord::observe(TrialId(trial), 1, opt, g, h.constraint(), 0.0);
            h.record_checkpoint(r).unwrap();
        }
        h
    }

    #[test]
    fn stop_counts() {
        assert_eq!(stratum_stop_count(0.25, 4), 1);
        assert_eq!(stratum_stop_count(0.25, 3), 0);
        assert_eq!(stratum_stop_count(0.25, 8), 2);
        assert_eq!(stratum_stop_count(0.25, 1), 0);
        assert_eq!(stratum_stop_count(0.29, 100), 29);
        assert_eq!(stratum_stop_count(0.03, 0), 0);
    }

    #[test]
    fn worst_violation_stops() {
        let h = history_with(&[
            (0, 0.1, Some(0.5)),
            (1, 0.1, Some(0.3)),
            (2, 0.1, Some(0.1)),
            (3, 0.1, Some(0.05)),
        ]);
        let (action, rank) = stratum_should_stop(0.25, &h, TrialId(0), CheckpointGroup::Invalid);
        assert_eq!(action, Action::Stop);
        assert_eq!(rank.unwrap().rank_from_worst, 1);
        for t in 1..4 {
            assert_eq!(
                stratum_should_stop(0.25, &h, TrialId(t), CheckpointGroup::Invalid).0,
                Action::Continue
            );
        }
    }

    #[test]
    fn metric_breaks_violation_ties() {
        let h = history_with(&[
            (0, 0.2, Some(0.3)),
            (1, 0.9, Some(0.3)),
            (2, 0.1, Some(0.3)),
            (3, 0.5, Some(0.3)),
        ]);
        assert_eq!(
            stratum_should_stop(0.25, &h, TrialId(1), CheckpointGroup::Invalid).0,
            Action::Stop
        );
        assert_eq!(
            stratum_should_stop(0.25, &h, TrialId(3), CheckpointGroup::Invalid).0,
            Action::Continue
        );
    }

    #[test]
    fn small_groups_never_stop() {
        let h = history_with(&[(0, 0.1, Some(-0.1)), (1, 0.2, Some(-0.1)), (2, 0.3, Some(-0.1))]);
        for t in 0..3 {
            assert_eq!(
                stratum_should_stop(0.25, &h, TrialId(t), CheckpointGroup::Valid).0,
                Action::Continue
            );
        }
        let h = history_with(&[(0, 0.1, None)]);
        assert_eq!(
            stratum_should_stop(0.9, &h, TrialId(0), CheckpointGroup::NoConstraint).0,
            Action::Continue
        );
    }

    #[test]
    fn identical_keys_tie_break_by_trial_id() {
        let h = history_with(&[(5, 0.3, None), (2, 0.3, None), (9, 0.3, None), (7, 0.3, None)]);
        assert_eq!(
            stratum_should_stop(0.25, &h, TrialId(9), CheckpointGroup::NoConstraint).0,
            Action::Stop
        );
        assert_eq!(
            stratum_should_stop(0.25, &h, TrialId(2), CheckpointGroup::NoConstraint).0,
            Action::Continue
        );
    }

    #[test]
    fn trial_outside_group_is_not_ranked() {
        let h = history_with(&[(0, 0.1, None)]);
        assert_eq!(group_rank(&h, TrialId(0), CheckpointGroup::Valid), None);
        assert_eq!(group_rank(&h, TrialId(1), CheckpointGroup::NoConstraint), None);
    }
}
