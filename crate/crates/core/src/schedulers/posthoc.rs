//! Feasibility scan for policies that never look at the constraint.

use std::cmp::Ordering;

use crate::num::Scalar;
use crate::trial_history::{ConstraintSpec, TrialId};

use super::ConstraintSample;

/// A finished trial and its best checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanCandidate<S> {
    pub trial_id: TrialId,
    pub best_iteration: u32,
    pub best_opt_metric: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanResult<S> {
    pub candidate: ScanCandidate<S>,
    pub constraint_value: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostHocScan<S> {
    /// First feasible candidate in best-first order; `None` when every
    /// candidate violates the constraint.
    pub best_feasible: Option<ScanResult<S>>,
    /// Every evaluation made, in scan order.
    pub evaluated: Vec<ScanResult<S>>,
    pub cost: S,
}

impl<S: Scalar> PostHocScan<S> {
    pub fn evaluations(&self) -> usize {
        self.evaluated.len()
    }
}

/// Walks candidates best-first (ties by trial id), evaluating the constraint
/// at each best checkpoint until one is feasible.
pub fn post_hoc_feasibility_scan<S, F>(
    candidates: &[ScanCandidate<S>],
    constraint: &ConstraintSpec<S>,
    mut evaluate: F,
) -> PostHocScan<S>
where
    S: Scalar,
    F: FnMut(&ScanCandidate<S>) -> ConstraintSample<S>,
{
    let mut order: Vec<&ScanCandidate<S>> = candidates.iter().collect();
    order.sort_by(|a, b| {
        a.best_opt_metric
            .partial_cmp(&b.best_opt_metric)
            .unwrap_or(Ordering::Equal)
            .then(a.trial_id.cmp(&b.trial_id))
    });
    let mut scan = PostHocScan {
        best_feasible: None,
        evaluated: Vec::new(),
        cost: S::zero(),
    };
    for candidate in order {
        let sample = evaluate(candidate);
        scan.cost = scan.cost + sample.cost;
        let result = ScanResult {
            candidate: *candidate,
            constraint_value: sample.value,
        };
        scan.evaluated.push(result);
        if constraint.is_satisfied(sample.value) {
            scan.best_feasible = Some(result);
            break;
        }
    }
    scan
}
