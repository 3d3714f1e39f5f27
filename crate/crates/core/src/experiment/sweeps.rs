//! Parameter sweeps: expected-cost curves, truncation percentages and the
//! brute-force check of the interval rule.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cost_model::{
    brute_force_optimal_interval, choose_interval, cost_ratio_threshold, expected_cost_closed, CostModelError,
    CostSetting,
};
use crate::rng::{keyed_rng, tag};

use super::output::format_float;
use super::{AceArm, ArmConfig, Experiment, ExperimentError, SchedulerConfig, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostCurveRow {
    pub stop_probability: f64,
    pub cost_ratio: f64,
    pub max_iterations: u32,
    pub interval: u32,
    pub expected_cost: f64,
}

pub const COST_CURVE_PRESETS: [&str; 2] = ["vary-t", "vary-r"];

/// `(r, T)` settings of a named sweep: `vary-t` fixes `r = 20` and doubles
/// `T` from 2 to 128; `vary-r` fixes `T = 16` and doubles `r` from 1/16 to
/// 1024.
pub fn cost_curve_preset(name: &str) -> Option<Vec<(f64, u32)>> {
    match name {
        "vary-t" => Some((1..=7).map(|k| (20.0, 1u32 << k)).collect()),
        "vary-r" => Some((-4..=10).map(|k| (2f64.powi(k), 16)).collect()),
        _ => None,
    }
}

/// Closed-form expected cost for every integer interval of each `(r, T)`.
pub fn cost_curve(
    stop_probability: f64,
    settings: &[(f64, u32)],
    primary_cost: f64,
) -> Result<Vec<CostCurveRow>, CostModelError> {
    let mut rows = Vec::new();
    for &(r, t) in settings {
        let setting = CostSetting::from_ratio(primary_cost, r, stop_probability, t)?;
        for interval in 1..=t {
            rows.push(CostCurveRow {
                stop_probability,
                cost_ratio: r,
                max_iterations: t,
                interval,
                expected_cost: expected_cost_closed(&setting.with_interval(interval)?),
            });
        }
    }
    Ok(rows)
}

pub fn write_cost_curve_csv<W: Write>(writer: W, rows: &[CostCurveRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["p", "r", "T", "beta", "expected_cost"])?;
    for row in rows {
        w.write_record([
            format_float(row.stop_probability),
            format_float(row.cost_ratio),
            row.max_iterations.to_string(),
            row.interval.to_string(),
            format_float(row.expected_cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationRow {
    pub percentage: f64,
    pub runs: usize,
    pub success_rate: f64,
    pub best_feasible_score: Stat,
    pub total_trials: Stat,
}

/// Runs ACE once per percentage and seed. Every percentage sees the same
/// candidate stream for a given seed.
pub fn truncation_sweep(
    experiment: &Experiment,
    percentages: &[f64],
    base: &AceArm,
) -> Result<Vec<TruncationRow>, ExperimentError> {
    if let Some(bad) = percentages.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(ExperimentError::Config {
            key: "percentages".into(),
            message: format!("every percentage must lie in (0, 1), got {bad}"),
        });
    }
    let seeds = &experiment.config().seeds;
    let jobs: Vec<(usize, u64)> = (0..percentages.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let reports = jobs
        .into_par_iter()
        .map(|(i, seed)| {
            let arm = ArmConfig {
                name: format!("ace-p{}", percentages[i]),
                scheduler: SchedulerConfig::Ace(AceArm {
                    truncation_percentage: percentages[i],
                    ..base.clone()
                }),
            };
            experiment.run_one(&arm, seed).map(|r| (i, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(percentages
        .iter()
        .enumerate()
        .map(|(i, &percentage)| {
            let runs: Vec<_> = reports.iter().filter(|(j, _)| *j == i).map(|(_, r)| r).collect();
            let scores: Vec<f64> = runs.iter().filter_map(|r| r.best_feasible_score).collect();
            let trials: Vec<f64> = runs.iter().map(|r| r.total_trials as f64).collect();
            TruncationRow {
                percentage,
                runs: runs.len(),
                success_rate: scores.len() as f64 / runs.len() as f64,
                best_feasible_score: Stat::of(&scores),
                total_trials: Stat::of(&trials),
            }
        })
        .collect())
}

pub fn write_truncation_csv<W: Write>(writer: W, rows: &[TruncationRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "percentage",
        "runs",
        "success_rate",
        "best_feasible_score_mean",
        "best_feasible_score_sd",
        "total_trials_mean",
        "total_trials_sd",
    ])?;
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for row in rows {
        w.write_record([
            format_float(row.percentage),
            row.runs.to_string(),
            format_float(row.success_rate),
            opt(row.best_feasible_score.mean),
            opt(row.best_feasible_score.sd),
            opt(row.total_trials.mean),
            opt(row.total_trials.sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A sampled `(p, r, T)` setting and what the brute-force scan found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremCase {
    pub stop_probability: f64,
    pub cost_ratio: f64,
    pub max_iterations: u32,
    pub oracle_interval: u32,
    pub oracle_cost: f64,
    /// `min(cost(1), cost(T))`.
    pub endpoint_cost: f64,
    pub chosen_interval: u32,
    pub threshold: f64,
}

impl TheoremCase {
    /// How much the cheaper endpoint exceeds the scan's minimum, relative.
    pub fn relative_excess(&self) -> f64 {
        (self.endpoint_cost - self.oracle_cost) / self.oracle_cost
    }

    /// Whether `r` is far enough from the threshold for the interval rule to
    /// be checked against the scan.
    pub fn decisive(&self) -> bool {
        (self.cost_ratio - self.threshold).abs() > 1e-6 * self.threshold.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSweep {
    pub cases: usize,
    /// Cases whose cheaper endpoint is within `1e-9` relative of the scan.
    pub endpoint_optimal: usize,
    /// Decisive cases, and those where the interval rule agrees with the scan.
    pub decisive: usize,
    pub rule_matches: usize,
    pub max_relative_excess: f64,
    pub failed: usize,
    /// Up to 20 failing cases.
    pub failures: Vec<TheoremCase>,
}

impl TheoremSweep {
    pub const ENDPOINT_TOLERANCE: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.endpoint_optimal == self.cases && self.rule_matches == self.decisive
    }
}

/// Draws `cases` settings with `p` in (0.01, 0.99), `r = 2^u` for `u` in
/// [-4, 10] and `T` in [2, 256], and checks that the best interval is an
/// endpoint and that the interval rule picks the scan's argmin.
pub fn validate_theorem(cases: usize, seed: u64) -> TheoremSweep {
    let results: Vec<TheoremCase> = (0..cases as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(&[tag::SWEEP, seed, i]);
            let p = loop {
                let p: f64 = rng.random_range(0.01..0.99);
                if p > 0.01 {
                    break p;
                }
            };
            let r = 2f64.powf(rng.random_range(-4.0..=10.0));
            let t: u32 = rng.random_range(2..=256);
            let setting = CostSetting::from_ratio(1.0, r, p, t).expect("sampled settings are in range");
            let (oracle_interval, oracle_cost) = brute_force_optimal_interval(&setting);
            let at = |b| expected_cost_closed(&setting.with_interval(b).expect("endpoint in range"));
            TheoremCase {
                stop_probability: p,
                cost_ratio: r,
                max_iterations: t,
                oracle_interval,
                oracle_cost,
                endpoint_cost: at(1).min(at(t)),
                chosen_interval: choose_interval(r, p, t).expect("sampled settings are in range"),
                threshold: cost_ratio_threshold(p, t).expect("T >= 2 and 0 < p < 1"),
            }
        })
        .collect();

    let mut sweep = TheoremSweep {
        cases,
        endpoint_optimal: 0,
        decisive: 0,
        rule_matches: 0,
        max_relative_excess: 0.0,
        failed: 0,
        failures: Vec::new(),
    };
    for case in results {
        let excess = case.relative_excess();
        sweep.max_relative_excess = sweep.max_relative_excess.max(excess);
        let mut ok = excess < TheoremSweep::ENDPOINT_TOLERANCE;
        sweep.endpoint_optimal += usize::from(ok);
        if case.decisive() {
            sweep.decisive += 1;
            let matches = case.chosen_interval == case.oracle_interval;
            sweep.rule_matches += usize::from(matches);
            ok &= matches;
        }
        if !ok {
            sweep.failed += 1;
            if sweep.failures.len() < 20 {
                sweep.failures.push(case);
            }
        }
    }
    sweep
}
