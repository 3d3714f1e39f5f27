//! Expected cost of a trial as a function of the constraint evaluation interval.
//!
//! A trial runs up to `T` iterations at `C2` per iteration. Every `β`
//! iterations the constraint is evaluated at `C1` per evaluation, and at each
//! evaluation the trial is stopped with probability `p`. Two routes to the
//! expected cost are provided: a direct summation over the stopping point
//! ([`expected_cost_exact`]) and the closed form ([`expected_cost_closed`]).
//! The closed form is minimized at `β = 1` or `β = T`; which end wins is
//! decided by comparing the cost ratio `r = C1 / C2` against
//! [`cost_ratio_threshold`].

use thiserror::Error;

use crate::num::Scalar;

/// Relative tolerance under which two brute-force candidates count as a tie.
pub const BRUTE_FORCE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostModelError {
    #[error("{name} = {value} is outside its domain: expected {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("max_iterations = {0} leaves a single admissible interval; the threshold is undefined")]
    DegenerateRange(u32),
}

fn domain<S: Scalar>(name: &'static str, value: S, expected: &'static str) -> CostModelError {
    CostModelError::Domain {
        name,
        value: value.as_f64(),
        expected,
    }
}

fn check_stop_probability<S: Scalar>(p: S) -> Result<(), CostModelError> {
    if p.is_finite() && p > S::zero() && p <= S::one() {
        Ok(())
    } else {
        Err(domain("stop_probability", p, "0 < p <= 1"))
    }
}

fn check_max_iterations(max_iterations: u32) -> Result<(), CostModelError> {
    if max_iterations >= 1 {
        Ok(())
    } else {
        Err(CostModelError::Domain {
            name: "max_iterations",
            value: 0.0,
            expected: "T >= 1",
        })
    }
}

/// Cost parameters of a trial without a chosen interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSetting<S> {
    primary_cost_per_iter: S,
    constraint_cost_per_eval: S,
    stop_probability: S,
    max_iterations: u32,
}

impl<S: Scalar> CostSetting<S> {
    pub fn new(
        primary_cost_per_iter: S,
        constraint_cost_per_eval: S,
        stop_probability: S,
        max_iterations: u32,
    ) -> Result<Self, CostModelError> {
        if !(primary_cost_per_iter.is_finite() && primary_cost_per_iter > S::zero()) {
            return Err(domain("primary_cost_per_iter", primary_cost_per_iter, "C2 > 0"));
        }
        if !(constraint_cost_per_eval.is_finite() && constraint_cost_per_eval >= S::zero()) {
            return Err(domain("constraint_cost_per_eval", constraint_cost_per_eval, "C1 >= 0"));
        }
        check_stop_probability(stop_probability)?;
        check_max_iterations(max_iterations)?;
        Ok(Self {
            primary_cost_per_iter,
            constraint_cost_per_eval,
            stop_probability,
            max_iterations,
        })
    }

    /// Builds a setting from `C2` and the ratio `r`, so that `C1 = r * C2`.
    pub fn from_ratio(
        primary_cost_per_iter: S,
        cost_ratio: S,
        stop_probability: S,
        max_iterations: u32,
    ) -> Result<Self, CostModelError> {
        if !(cost_ratio.is_finite() && cost_ratio >= S::zero()) {
            return Err(domain("cost_ratio", cost_ratio, "r >= 0"));
        }
        Self::new(
            primary_cost_per_iter,
            cost_ratio * primary_cost_per_iter,
            stop_probability,
            max_iterations,
        )
    }

    pub fn with_interval(self, interval: u32) -> Result<CostParams<S>, CostModelError> {
        if interval == 0 || interval > self.max_iterations {
            return Err(CostModelError::Domain {
                name: "interval",
                value: f64::from(interval),
                expected: "1 <= beta <= T",
            });
        }
        Ok(CostParams {
            setting: self,
            interval,
        })
    }

    pub fn primary_cost_per_iter(&self) -> S {
        self.primary_cost_per_iter
    }

    pub fn constraint_cost_per_eval(&self) -> S {
        self.constraint_cost_per_eval
    }

    pub fn stop_probability(&self) -> S {
        self.stop_probability
    }

    pub fn max_iterations(&self) -> u32 {
        self.max_iterations
    }

    /// `r = C1 / C2`.
    pub fn cost_ratio(&self) -> S {
        self.constraint_cost_per_eval / self.primary_cost_per_iter
    }
}

/// A [`CostSetting`] together with a constraint evaluation interval `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams<S> {
    setting: CostSetting<S>,
    interval: u32,
}

impl<S: Scalar> CostParams<S> {
    pub fn new(
        primary_cost_per_iter: S,
        constraint_cost_per_eval: S,
        stop_probability: S,
        max_iterations: u32,
        interval: u32,
    ) -> Result<Self, CostModelError> {
        CostSetting::new(
            primary_cost_per_iter,
            constraint_cost_per_eval,
            stop_probability,
            max_iterations,
        )?
        .with_interval(interval)
    }

    pub fn setting(&self) -> &CostSetting<S> {
        &self.setting
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    /// Number of constraint checks a surviving trial goes through: the
    /// smallest `z` with `(z - 1) * β < T <= z * β`.
    pub fn evaluation_count(&self) -> u32 {
        self.setting.max_iterations.div_ceil(self.interval)
    }
}

/// Expected trial cost by direct summation over the stopping check.
///
/// The trial survives all `z` checks with probability `(1-p)^z` and then
/// costs `C1 z + C2 T`; it is stopped at check `k` with probability
/// `(1-p)^(k-1) p` after costing `C1 k + C2 k β`.
pub fn expected_cost_exact<S: Scalar>(params: &CostParams<S>) -> S {
    let setting = &params.setting;
    let c1 = setting.constraint_cost_per_eval;
    let c2 = setting.primary_cost_per_iter;
    let p = setting.stop_probability;
    let survive = S::one() - p;
    let z = params.evaluation_count();
    let beta = S::from_count(params.interval);

    let mut total = S::zero();
    let mut reach = S::one();
    for k in 1..=z {
        let k_s = S::from_count(k);
        total = total + reach * p * (c1 * k_s + c2 * k_s * beta);
        reach = reach * survive;
    }
    let z_s = S::from_count(z);
    total + reach * (c1 * z_s + c2 * S::from_count(setting.max_iterations))
}

/// `1 - (1-p)^x`, accurate for small `p`.
fn stop_within<S: Scalar>(p: S, exponent: S) -> S {
    if p >= S::one() {
        return S::one();
    }
    -(exponent * (-p).ln_1p()).exp_m1()
}

/// Closed-form expected cost `C2 (r + β) (1 - (1-p)^(T/β)) / p`.
///
/// `T / β` is a real exponent, so `β` need not divide `T`. At `p = 1` this is
/// the limit `C2 (r + β)`.
pub fn expected_cost_closed<S: Scalar>(params: &CostParams<S>) -> S {
    let setting = &params.setting;
    let beta = S::from_count(params.interval);
    let scale = setting.primary_cost_per_iter * (setting.cost_ratio() + beta);
    let p = setting.stop_probability;
    if p >= S::one() {
        return scale;
    }
    let exponent = S::from_count(setting.max_iterations) / beta;
    scale * stop_within(p, exponent) / p
}

/// Cost ratio at which `β = 1` and `β = T` have equal expected cost:
/// `(pT + (1-p)^T - 1) / (1 - p - (1-p)^T)`.
pub fn cost_ratio_threshold<S: Scalar>(stop_probability: S, max_iterations: u32) -> Result<S, CostModelError> {
    if max_iterations < 2 {
        return Err(CostModelError::DegenerateRange(max_iterations));
    }
    let p = stop_probability;
    if !(p.is_finite() && p > S::zero() && p < S::one()) {
        return Err(domain("stop_probability", p, "0 < p < 1"));
    }
    let t = S::from_count(max_iterations);
    // (1-p)^T - 1
    let survive_all_minus_one = (t * (-p).ln_1p()).exp_m1();
    let numerator = p * t + survive_all_minus_one;
    let denominator = -p - survive_all_minus_one;
    Ok(numerator / denominator)
}

/// Cost-optimal interval: `1` below the threshold, `T` above it and on a tie.
///
/// `p = 1` always selects `1` since the threshold diverges as `p -> 1`.
pub fn choose_interval<S: Scalar>(
    cost_ratio: S,
    stop_probability: S,
    max_iterations: u32,
) -> Result<u32, CostModelError> {
    if !(cost_ratio.is_finite() && cost_ratio >= S::zero()) {
        return Err(domain("cost_ratio", cost_ratio, "r >= 0"));
    }
    check_stop_probability(stop_probability)?;
    check_max_iterations(max_iterations)?;
    if max_iterations == 1 || stop_probability >= S::one() {
        return Ok(1);
    }
    let threshold = cost_ratio_threshold(stop_probability, max_iterations)?;
    Ok(if cost_ratio < threshold { 1 } else { max_iterations })
}

/// Scans every integer `β` in `[1, T]` with the closed form and returns the
/// cheapest one. Near-ties within [`BRUTE_FORCE_TIE_TOLERANCE`] keep the
/// smaller interval.
pub fn brute_force_optimal_interval<S: Scalar>(setting: &CostSetting<S>) -> (u32, S) {
    let tie = S::lit(BRUTE_FORCE_TIE_TOLERANCE);
    let mut best = (
        1,
        expected_cost_closed(&CostParams {
            setting: *setting,
            interval: 1,
        }),
    );
    for interval in 2..=setting.max_iterations {
        let cost = expected_cost_closed(&CostParams {
            setting: *setting,
            interval,
        });
        if cost < best.1 - tie * best.1.abs() {
            best = (interval, cost);
        }
    }
    best
}
