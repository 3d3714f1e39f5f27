//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ace_core::cost_model::{cost_ratio_threshold, expected_cost_closed, expected_cost_exact, CostParams};
use ace_core::experiment::{
    truncation_sweep, validate_theorem, write_outputs, AceArm, Experiment, ExperimentConfig, RunResult,
};
use ace_core::rng::keyed_rng;
use ace_core::schedulers::{AceConfig, AceScheduler, AshaConfig, AshaScheduler, Scheduler, StoppingMode};
use ace_core::sim::{replay, ExperimentReport, ReplayOutcome, ScriptedTrial, FAIRNESS_LIKE, ROBUSTNESS_LIKE};
use ace_core::trial_history::{CheckpointGroup, ConstraintSpec};
use common::*;
use proptest::test_runner::TestRunner;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn theorem_sweep() -> Verdict {
    let start = Instant::now();
    let sweep = validate_theorem(10_000, 0);
    let elapsed = start.elapsed();
    verdict(
        sweep.passed() && elapsed < Duration::from_secs(10),
        format!(
            "{}/{} endpoint-optimal, rule matches {}/{} decisive, max excess {:.2e}, {}",
            sweep.endpoint_optimal,
            sweep.cases,
            sweep.rule_matches,
            sweep.decisive,
            sweep.max_relative_excess,
            secs(elapsed)
        ),
    )
}

fn closed_form() -> Verdict {
    let start = Instant::now();
    let mut rng = keyed_rng(&[0x6571_7576, 2]);
    let mut worst = 0.0f64;
    for _ in 0..5000 {
        let c2: f64 = 2f64.powf(rng.random_range(-6.0..6.0));
        let c1: f64 = 2f64.powf(rng.random_range(-6.0..12.0));
        let p: f64 = rng.random_range(0.001..=1.0);
        let t: u32 = rng.random_range(1..=256);
        let divisors: Vec<u32> = (1..=t).filter(|&b| t.is_multiple_of(b)).collect();
        let beta = divisors[rng.random_range(0..divisors.len())];
        let params = CostParams::new(c2, c1, p, t, beta).unwrap();
        let exact = expected_cost_exact(&params);
        let closed = expected_cost_closed(&params);
        worst = worst.max((exact - closed).abs() / exact.abs());
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("5000 cases, max relative gap {worst:.2e}, {}", secs(elapsed)),
    )
}

fn threshold_anchors() -> Verdict {
    let t16: f64 = cost_ratio_threshold(0.5, 16).unwrap();
    let t21: f64 = cost_ratio_threshold(0.5, 21).unwrap();
    let t22: f64 = cost_ratio_threshold(0.5, 22).unwrap();
    // Direct arithmetic for the anchor: (pT + (1-p)^T - 1) / (1 - p - (1-p)^T).
    let direct = (8.0 + 0.5f64.powi(16) - 1.0) / (0.5 - 0.5f64.powi(16));
    let pass = (t16 - 14.0).abs() <= 0.01 && (t16 - direct).abs() < 1e-12 && t21 < 20.0 && 20.0 <= t22 + 0.01;
    verdict(
        pass,
        format!("threshold(0.5,16)={t16:.5}, threshold(0.5,21)={t21:.4}, threshold(0.5,22)={t22:.4}"),
    )
}

fn linear(start: f64, slope: f64) -> Vec<f64> {
    (1..=10).map(|t| start - slope * f64::from(t)).collect()
}

/// A warm-up trial that completes first, then a transiently invalid trial,
/// three mildly invalid trials and one always-invalid trial starting together.
fn fixture() -> Vec<ScriptedTrial> {
    let mut transient = vec![0.2; 10];
    transient[4..7].fill(0.3);
    let trial = |opt, g: Vec<f64>, phase| ScriptedTrial::new(opt, g).costs(1.0, 0.5).starting_at(phase);
    vec![
        trial(linear(0.95, 0.001), vec![0.1; 10], 0),
        trial(linear(0.6, 0.01), transient, 10),
        trial(linear(0.5, 0.01), vec![0.45; 10], 10),
        trial(linear(0.5, 0.01), vec![0.55; 10], 10),
        trial(linear(0.5, 0.01), vec![0.65; 10], 10),
        trial(linear(0.4, 0.01), vec![0.9; 10], 10),
    ]
}

fn transient_fixture() -> Verdict {
    const TRANSIENT: usize = 1;
    const INVALID: usize = 5;
    let constraint = ConstraintSpec::new(0.25).unwrap();
    let trials = fixture();
    let run = |scheduler: &mut dyn Scheduler<f64>| -> ReplayOutcome { replay(scheduler, &trials) };

    let ace = run(&mut AceScheduler::new(AceConfig::new(constraint).truncation(0.25)).unwrap());
    let hard = run(&mut AceScheduler::new(AceConfig::new(constraint).stopping(StoppingMode::Hard)).unwrap());
    let asha = run(&mut AshaScheduler::new(AshaConfig::new(10)).unwrap());

    let transient = &ace.trials[TRANSIENT];
    let invalid_window: Vec<_> = transient.decisions[4..7]
        .iter()
        .map(|d| d.rank.map(|r| r.group))
        .collect();
    let survives = transient.stopped_at.is_none()
        && transient.iterations_run == 10
        && (5..=7).all(|t| transient.evaluated.contains(&t))
        && invalid_window.iter().all(|g| *g == Some(CheckpointGroup::Invalid));
    let ace_stop = ace.trials[INVALID].stopped_at;
    let asha_stop = asha.trials[INVALID].stopped_at;
    let earlier = matches!((ace_stop, asha_stop), (Some(a), Some(b)) if 2 * a <= b);
    let hard_stop = hard.trials[TRANSIENT].stopped_at;
    verdict(
        survives && ace_stop == Some(1) && asha_stop == Some(4) && earlier && hard_stop == Some(5),
        format!(
            "transient trial runs {} iterations under ACE; invalid trial stopped at {ace_stop:?} (ACE) vs {asha_stop:?} (ASHA); ACE-hard stops transient at {hard_stop:?}",
            transient.iterations_run
        ),
    )
}

fn config(preset: &str, budget: f64, seeds: &[u64], arms: &str) -> ExperimentConfig {
    let json = format!(
        r#"{{"problem": {{"preset": "{preset}"}}, "budget": {budget}, "max_concurrent": 4,
            "seeds": {seeds:?}, "output_dir": "unused", "arms": {arms}}}"#
    );
    ExperimentConfig::from_json(&json).unwrap()
}

fn runs<'a>(results: &'a [RunResult], arm: &str) -> Vec<&'a ExperimentReport> {
    results.iter().filter(|r| r.arm == arm).map(|r| &r.report).collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean best feasible score in minimized units over successful runs.
fn mean_internal(reports: &[&ExperimentReport]) -> f64 {
    mean(
        reports
            .iter()
            .filter_map(|r| r.best_feasible_score.map(|s| r.direction.internal(s))),
    )
}

fn success_rate(reports: &[&ExperimentReport]) -> f64 {
    reports.iter().filter(|r| r.feasible_found).count() as f64 / reports.len() as f64
}

fn ordering() -> Verdict {
    let start = Instant::now();
    let config = config(
        FAIRNESS_LIKE,
        1500.0,
        &[0, 1, 2, 3, 4],
        r#"[{"name": "ace", "scheduler": {"type": "ace"}},
            {"name": "asha-callback", "scheduler": {"type": "asha", "constraint": "callback"}},
            {"name": "no-stopping", "scheduler": {"type": "no-stopping"}}]"#,
    );
    let experiment = Experiment::new(config).unwrap();
    let feasible = experiment.problem().ever_feasible_fraction(4000);
    let results = experiment.run().unwrap();
    let elapsed = start.elapsed();
    let [ace, asha, plain] = ["ace", "asha-callback", "no-stopping"].map(|a| runs(&results, a));
    let direction = ace[0].direction;
    let [m_ace, m_asha, m_plain] = [&ace, &asha, &plain].map(|r| mean_internal(r));
    verdict(
        feasible <= 0.2
            && m_ace <= m_asha
            && m_ace <= m_plain
            && success_rate(&ace) == 1.0
            && elapsed < Duration::from_secs(60),
        format!(
            "ever-feasible {:.3}; mean best feasible ACE {:.4}, ASHA-callback {:.4}, no-stopping {:.4}; ACE success {:.0}%; {}",
            feasible,
            direction.natural(m_ace),
            direction.natural(m_asha),
            direction.natural(m_plain),
            100.0 * success_rate(&ace),
            secs(elapsed)
        ),
    )
}

fn adaptive_interval() -> Verdict {
    let arms = r#"[{"name": "ace", "scheduler": {"type": "ace"}}]"#;
    let mut details = Vec::new();
    let mut pass = true;
    for (preset, budget, range, want_beta_one) in [
        (FAIRNESS_LIKE, 1500.0, 1.5..=2.5, true),
        (ROBUSTNESS_LIKE, 3000.0, 20.0..=28.0, false),
    ] {
        let experiment = Experiment::new(config(preset, budget, &[0, 1, 2], arms)).unwrap();
        let results = experiment.run().unwrap();
        let reports = runs(&results, "ace");
        let (mut one, mut max, mut total) = (0, 0, 0);
        for r in &reports {
            one += r.interval_tally.beta_one;
            max += r.interval_tally.beta_max;
            total += r.interval_tally.total();
        }
        let ratios: Vec<f64> = reports.iter().filter_map(|r| r.measured_cost_ratio).collect();
        let in_range = ratios.len() == reports.len() && ratios.iter().all(|r| range.contains(r));
        let share = if want_beta_one { one } else { max } as f64 / total as f64;
        pass &= in_range && share > 0.6;
        details.push(format!(
            "{preset}: beta=1 {one}, beta=T {max} of {total}, r in [{:.2}, {:.2}]",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        ));
    }
    verdict(pass, details.join("; "))
}

fn gate_efficiency() -> Verdict {
    let config = config(
        ROBUSTNESS_LIKE,
        3000.0,
        &[0, 1, 2],
        r#"[{"name": "ace", "scheduler": {"type": "ace"}},
            {"name": "noskip", "scheduler": {"type": "ace", "low_overhead_gate": false}}]"#,
    );
    let results = Experiment::new(config).unwrap().run().unwrap();
    let (ace, noskip) = (runs(&results, "ace"), runs(&results, "noskip"));
    let mut pass = true;
    let mut per_seed = Vec::new();
    for (a, n) in ace.iter().zip(&noskip) {
        pass &= a.constraint_evaluations < n.constraint_evaluations && a.total_trials >= n.total_trials;
        per_seed.push(format!(
            "seed {}: evals {}/{}, trials {}/{}",
            a.search_seed, a.constraint_evaluations, n.constraint_evaluations, a.total_trials, n.total_trials
        ));
    }
    let (m_ace, m_noskip) = (mean_internal(&ace), mean_internal(&noskip));
    // Positive when ACE is worse.
    let degradation = (m_ace - m_noskip) / m_noskip.abs();
    pass &= degradation < 0.01 && success_rate(&ace) == 1.0;
    verdict(
        pass,
        format!(
            "{}; mean score ACE {:.4} vs noskip {:.4} (degradation {:+.3}%)",
            per_seed.join(", "),
            ace[0].direction.natural(m_ace),
            ace[0].direction.natural(m_noskip),
            100.0 * degradation
        ),
    )
}

fn truncation() -> Verdict {
    let percentages = [0.03, 0.13, 0.25, 0.5, 0.75];
    let arms = r#"[{"name": "ace", "scheduler": {"type": "ace"}}]"#;
    let experiment = Experiment::new(config(FAIRNESS_LIKE, 1500.0, &[0, 1, 2, 3, 4], arms)).unwrap();
    let rows = truncation_sweep(&experiment, &percentages, &AceArm::default()).unwrap();
    let trials: Vec<f64> = rows.iter().map(|r| r.total_trials.mean.unwrap()).collect();
    let monotone = trials.windows(2).all(|w| w[0] <= w[1]);
    let direction = experiment.problem().direction();
    let internal: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.best_feasible_score
                .mean
                .map_or(f64::INFINITY, |s| direction.internal(s))
        })
        .collect();
    let best_low = internal[..3].iter().copied().fold(f64::INFINITY, f64::min);
    let gap = (internal[2] - best_low) / best_low.abs();
    let stable = gap < 0.01;
    verdict(
        monotone && stable,
        format!(
            "mean total trials {:?} ({}); P=0.25 within {:.3}% of best over P<=0.25 ({})",
            trials,
            if monotone { "nondecreasing" } else { "NOT nondecreasing" },
            100.0 * gap,
            if stable { "stable" } else { "NOT stable" }
        ),
    )
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let arms = r#"[{"name": "ace", "scheduler": {"type": "ace"}},
        {"name": "ace-hard", "scheduler": {"type": "ace", "stopping_mode": "hard"}},
        {"name": "asha", "scheduler": {"type": "asha"}},
        {"name": "asha-callback", "scheduler": {"type": "asha", "constraint": "callback"}},
        {"name": "asha-stratum", "scheduler": {"type": "asha", "constraint": "stratum", "constraint_interval_fixed": false}},
        {"name": "no-stopping", "scheduler": {"type": "no-stopping", "constraint_callback": true}}]"#;
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let config = config(ROBUSTNESS_LIKE, 400.0, &[0, 1], arms);
        let experiment = Experiment::new(config).unwrap().with_output_dir(dir.path().to_owned());
        let results = experiment.run().unwrap();
        write_outputs(
            experiment.config(),
            experiment.problem().constraint_threshold(),
            &results,
        )
        .unwrap();
        trees.push(read_tree(dir.path()));
    }
    let files = trees[0].len();
    verdict(
        files == 6 * 2 + 6 + 2 && trees[0] == trees[1],
        format!("{files} files compared byte for byte across two runs"),
    )
}

fn properties() -> Verdict {
    let mut failures = Vec::new();
    let mut record = |name: &str, outcome: Result<(), String>| {
        if let Err(e) = outcome {
            failures.push(format!("{name}: {e}"));
        }
    };
    let runner = || TestRunner::new(proptest_config(1000));
    record(
        "stratum bound",
        runner()
            .run(&(event_stream(), ace_config()), |(s, c)| check_stratum_bound(&s, c))
            .map_err(|e| e.to_string()),
    );
    record(
        "f* monotone",
        runner()
            .run(&(event_stream(), ace_config()), |(s, c)| check_fstar_monotone(&s, c))
            .map_err(|e| e.to_string()),
    );
    record(
        "cost conservation",
        runner()
            .run(&sim_case(), |c| check_cost_conservation(&c))
            .map_err(|e| e.to_string()),
    );
    record(
        "ASHA promotions",
        runner()
            .run(&(event_stream(), asha_config()), |(s, c)| check_asha_promotions(&s, c))
            .map_err(|e| e.to_string()),
    );
    let pass = failures.is_empty();
    verdict(
        pass,
        if pass {
            "stratum bound, f* monotone, cost conservation, ASHA promotions: 1000 cases each".to_owned()
        } else {
            failures.join("; ")
        },
    )
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("interval rule vs brute force", theorem_sweep),
        ("closed-form expected cost", closed_form),
        ("threshold anchors", threshold_anchors),
        ("transient-violation fixture", transient_fixture),
        ("hard-constraint ordering", ordering),
        ("adaptive interval", adaptive_interval),
        ("low-overhead gate", gate_efficiency),
        ("truncation sweep", truncation),
        ("determinism", determinism),
        ("structural invariants", properties),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
