//! Synthetic learning and constraint curves.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{keyed_rng, tag};
use crate::trial_history::CostLedger;

use super::SimError;

/// `asymptote + (start - asymptote) * exp(-rate * t) + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptCurve {
    pub asymptote: f64,
    pub start: f64,
    pub rate: f64,
    pub noise: f64,
}

/// Exponential approach plus a sinusoid, so feasibility can come and go.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCurve {
    pub asymptote: f64,
    pub start: f64,
    pub rate: f64,
    pub amplitude: f64,
    pub period: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialCurve {
    pub opt: OptCurve,
    pub constraint: ConstraintCurve,
    /// Cost of one training iteration plus its metric evaluation.
    pub primary_cost: f64,
    /// Cost of one constraint evaluation.
    pub constraint_cost: f64,
    pub max_iterations: u32,
}

fn gaussian(key: &[u64]) -> f64 {
    StandardNormal.sample(&mut keyed_rng(key))
}

impl OptCurve {
    /// Noise-free value; `t = 0` gives `start`.
    pub fn mean(&self, t: f64) -> f64 {
        self.asymptote + (self.start - self.asymptote) * (-self.rate * t).exp()
    }
}

impl ConstraintCurve {
    pub fn mean(&self, t: f64) -> f64 {
        self.asymptote
            + (self.start - self.asymptote) * (-self.rate * t).exp()
            + self.amplitude * (std::f64::consts::TAU * t / self.period).sin()
    }
}

impl TrialCurve {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidCurve(what.to_owned()));
        let finite = [
            self.opt.asymptote,
            self.opt.start,
            self.constraint.asymptote,
            self.constraint.start,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("curve levels must be finite");
        }
        if !(self.opt.rate > 0.0 && self.constraint.rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.opt.noise >= 0.0 && self.constraint.noise >= 0.0 && self.constraint.amplitude >= 0.0) {
            return bad("noise and oscillation amplitudes must be nonnegative");
        }
        if !(self.constraint.period > 0.0 && self.constraint.period.is_finite()) {
            return bad("oscillation period must be positive");
        }
        if !(self.primary_cost > 0.0 && self.primary_cost.is_finite()) {
            return bad("primary cost must be positive");
        }
        if !(self.constraint_cost >= 0.0 && self.constraint_cost.is_finite()) {
            return bad("constraint cost must be nonnegative");
        }
        if self.max_iterations == 0 {
            return bad("a trial needs at least one iteration");
        }
        Ok(())
    }

    fn check_iteration(&self, t: u32) -> Result<(), SimError> {
        if (1..=self.max_iterations).contains(&t) {
            Ok(())
        } else {
            Err(SimError::IterationOutOfRange {
                iteration: t,
                max_iterations: self.max_iterations,
            })
        }
    }

    /// Optimization metric at iteration `t`, in the problem's own direction.
    pub fn opt_metric(&self, t: u32, trial_key: u64) -> Result<f64, SimError> {
        self.check_iteration(t)?;
        let mut value = self.opt.mean(f64::from(t));
        if self.opt.noise > 0.0 {
            value += self.opt.noise * gaussian(&[tag::OPT_NOISE, trial_key, u64::from(t)]);
        }
        Ok(value)
    }

    pub fn constraint_metric(&self, t: u32, trial_key: u64) -> Result<f64, SimError> {
        self.check_iteration(t)?;
        let mut value = self.constraint.mean(f64::from(t));
        if self.constraint.noise > 0.0 {
            value += self.constraint.noise * gaussian(&[tag::CONSTRAINT_NOISE, trial_key, u64::from(t)]);
        }
        Ok(value)
    }

    /// Smallest noise-free constraint value over `1..=T`.
    pub fn min_constraint_mean(&self) -> f64 {
        (1..=self.max_iterations)
            .map(|t| self.constraint.mean(f64::from(t)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Clock plus cost ledger for one line of work; every evaluation is charged.
#[derive(Debug, Clone, Default)]
pub struct Meter {
    clock: f64,
    ledger: CostLedger<f64>,
}

impl Meter {
    pub fn starting_at(clock: f64) -> Self {
        Self {
            clock,
            ledger: CostLedger::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn ledger(&self) -> &CostLedger<f64> {
        &self.ledger
    }

    /// Optimization metric at `t`; charges the primary cost.
    pub fn eval_opt_metric(&mut self, curve: &TrialCurve, t: u32, trial_key: u64) -> Result<f64, SimError> {
        let value = curve.opt_metric(t, trial_key)?;
        self.ledger.charge_primary(curve.primary_cost);
        self.clock += curve.primary_cost;
        Ok(value)
    }

    /// Constraint metric at `t`; charges the constraint cost.
    pub fn eval_constraint_metric(&mut self, curve: &TrialCurve, t: u32, trial_key: u64) -> Result<f64, SimError> {
        let value = curve.constraint_metric(t, trial_key)?;
        self.ledger.charge_constraint(curve.constraint_cost);
        self.clock += curve.constraint_cost;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curve() -> TrialCurve {
        TrialCurve {
            opt: OptCurve {
                asymptote: 0.0,
                start: 1.0,
                rate: std::f64::consts::LN_2,
                noise: 0.0,
            },
            constraint: ConstraintCurve {
                asymptote: 0.1,
                start: 0.1,
                rate: 1.0,
                amplitude: 0.0,
                period: 1.0,
                noise: 0.0,
            },
            primary_cost: 1.5,
            constraint_cost: 3.0,
            max_iterations: 200,
        }
    }

    #[test]
    fn opt_curve_values() {
        let c = curve();
        assert_relative_eq!(c.opt_metric(1, 0).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(c.opt.mean(0.0), 1.0);
        let fast = TrialCurve {
            opt: OptCurve { rate: 5.0, ..c.opt },
            ..c
        };
        assert!(fast.opt_metric(200, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constraint_settles_and_oscillates() {
        let c = curve();
        assert_relative_eq!(c.constraint_metric(150, 9).unwrap(), 0.1, max_relative = 1e-12);

        // asymptote below the threshold, asymptote + amplitude above it.
        let tau = 0.2;
        let wavy = TrialCurve {
            constraint: ConstraintCurve {
                asymptote: 0.15,
                start: 0.15,
                amplitude: 0.1,
                period: 8.0,
                ..c.constraint
            },
            ..c
        };
        let feasible: Vec<bool> = (1..=32).map(|t| wavy.constraint_metric(t, 0).unwrap() <= tau).collect();
        let flips = feasible.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(flips >= 4, "{feasible:?}");
    }

    #[test]
    fn noise_is_keyed() {
        let c = TrialCurve {
            opt: OptCurve {
                noise: 0.1,
                ..curve().opt
            },
            ..curve()
        };
        assert_eq!(c.opt_metric(3, 11).unwrap(), c.opt_metric(3, 11).unwrap());
        assert_ne!(c.opt_metric(3, 11).unwrap(), c.opt_metric(3, 12).unwrap());
        assert_ne!(c.opt_metric(3, 11).unwrap(), c.opt_metric(4, 11).unwrap());
    }

    #[test]
    fn out_of_range_iterations() {
        let c = curve();
        assert!(matches!(c.opt_metric(0, 0), Err(SimError::IterationOutOfRange { .. })));
        assert!(c.constraint_metric(201, 0).is_err());
    }

    #[test]
    fn meter_charges_each_call() {
        let c = curve();
        let mut meter = Meter::starting_at(10.0);
        meter.eval_opt_metric(&c, 1, 0).unwrap();
        meter.eval_constraint_metric(&c, 1, 0).unwrap();
        meter.eval_constraint_metric(&c, 1, 0).unwrap();
        assert_eq!(meter.ledger().constraint_cost_count(), 2);
        assert_eq!(meter.ledger().total_constraint_cost(), 6.0);
        assert_eq!(meter.ledger().primary_cost_count(), 1);
        assert_eq!(meter.clock(), 10.0 + 1.5 + 6.0);
        assert!(meter.eval_opt_metric(&c, 0, 0).is_err());
        assert_eq!(meter.ledger().primary_cost_count(), 1);
    }

    #[test]
    fn validation() {
        assert!(curve().validate().is_ok());
        let mut c = curve();
        c.primary_cost = 0.0;
        assert!(c.validate().is_err());
        let mut c = curve();
        c.constraint.period = 0.0;
        assert!(c.validate().is_err());
    }
}
