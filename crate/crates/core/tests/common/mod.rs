//! Random event streams and invariant checks shared by the property suite
//! and the acceptance target.

#![allow(dead_code)]

use std::sync::OnceLock;

use ace_core::experiment::{AceArm, AshaArm, AshaConstraintMode, NoStoppingArm, SchedulerConfig};
use ace_core::schedulers::{
    stratum_stop_count, AceConfig, AceScheduler, Action, AshaConfig, AshaScheduler, CheckpointContext,
    ConstraintSample, IntervalMode, Scheduler, SchedulerDecision, StoppingMode,
};
use ace_core::sim::{run_experiment, Problem, SimSettings, TrialStatus, FAIRNESS_LIKE, ROBUSTNESS_LIKE};
use ace_core::trial_history::{CheckpointGroup, ConstraintSpec, TrialId};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

pub const THRESHOLD: f64 = 0.5;

pub fn constraint() -> ConstraintSpec<f64> {
    ConstraintSpec::new(THRESHOLD).unwrap()
}

/// Fixed-seed config so failures reproduce.
pub fn proptest_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

#[derive(Debug, Clone)]
pub struct TrialScript {
    pub opt: Vec<f64>,
    pub constraint: Vec<f64>,
    pub primary_cost: f64,
    pub constraint_cost: f64,
}

/// Trials plus the order in which live trials advance. At most `concurrency`
/// trials are live; a finished trial makes room for the next one.
#[derive(Debug, Clone)]
pub struct EventStream {
    pub trials: Vec<TrialScript>,
    pub concurrency: usize,
    pub picks: Vec<usize>,
}

fn trial_script() -> impl Strategy<Value = TrialScript> {
    (1usize..=16).prop_flat_map(|t| {
        (
            prop::collection::vec((0u32..=20).prop_map(|v| f64::from(v) / 20.0), t),
            prop::collection::vec((0u32..=20).prop_map(|v| f64::from(v) / 20.0), t),
            prop::sample::select(vec![0.5, 1.0, 2.0]),
            prop::sample::select(vec![0.0, 0.5, 3.0, 40.0]),
        )
            .prop_map(|(opt, constraint, primary_cost, constraint_cost)| TrialScript {
                opt,
                constraint,
                primary_cost,
                constraint_cost,
            })
    })
}

pub fn event_stream() -> impl Strategy<Value = EventStream> {
    (
        prop::collection::vec(trial_script(), 1..=14),
        1usize..=6,
        prop::collection::vec(any::<usize>(), 256),
    )
        .prop_map(|(trials, concurrency, picks)| EventStream {
            trials,
            concurrency,
            picks,
        })
}

pub fn ace_config() -> impl Strategy<Value = AceConfig<f64>> {
    (
        0.01f64..0.99,
        any::<bool>(),
        prop::sample::select(vec![StoppingMode::Stratum, StoppingMode::Hard]),
        prop::sample::select(vec![IntervalMode::Adaptive, IntervalMode::Fixed1, IntervalMode::FixedT]),
    )
        .prop_map(|(p, gate, stopping, interval)| {
            AceConfig::new(constraint())
                .truncation(p)
                .gate(gate)
                .stopping(stopping)
                .interval(interval)
        })
}

pub fn asha_config() -> impl Strategy<Value = AshaConfig<f64>> {
    (2u32..=5, 1u32..=3, 0u8..4).prop_map(|(eta, grace, mode)| {
        let mut config = AshaConfig::new(16);
        config.reduction_factor = eta;
        config.grace_period = grace;
        match mode {
            0 => config,
            1 => config.with_callback(constraint()),
            2 => config.with_stratum(constraint(), true),
            _ => config.with_stratum(constraint(), false),
        }
    })
}

/// Feeds `stream` to `scheduler`; `check` runs after every step.
pub fn drive<S, F>(scheduler: &mut S, stream: &EventStream, mut check: F) -> Result<(), TestCaseError>
where
    S: Scheduler<f64>,
    F: FnMut(&S, &CheckpointContext<f64>, &SchedulerDecision) -> Result<(), TestCaseError>,
{
    struct Live {
        index: usize,
        next: u32,
    }
    let mut live: Vec<Live> = Vec::new();
    let mut next_trial = 0;
    let mut clock = 0.0;
    let mut picks = stream.picks.iter().cycle();
    loop {
        while live.len() < stream.concurrency && next_trial < stream.trials.len() {
            let t = stream.trials[next_trial].opt.len() as u32;
            scheduler.on_trial_start(TrialId(next_trial as u64), t);
            live.push(Live {
                index: next_trial,
                next: 1,
            });
            next_trial += 1;
        }
        if live.is_empty() {
            return Ok(());
        }
        let slot = picks.next().expect("cycled") % live.len();
        let script = &stream.trials[live[slot].index];
        let t = live[slot].next;
        clock += script.primary_cost;
        let ctx = CheckpointContext {
            trial_id: TrialId(live[slot].index as u64),
            iteration: t,
            max_iterations: script.opt.len() as u32,
            opt_metric: script.opt[t as usize - 1],
            primary_cost: script.primary_cost,
            sim_time: clock,
        };
        let mut calls = 0;
        let mut evaluate = |at: u32| {
            assert!((1..=t).contains(&at));
            calls += 1;
            ConstraintSample {
                value: script.constraint[at as usize - 1],
                cost: script.constraint_cost,
            }
        };
        let decision = scheduler.step(&ctx, &mut evaluate);
        prop_assert!(calls <= 1, "at most one constraint evaluation per step, got {}", calls);
        prop_assert_eq!(decision.evaluate_constraint, calls == 1);
        check(scheduler, &ctx, &decision)?;
        if decision.action == Action::Stop || t >= ctx.max_iterations {
            live.swap_remove(slot);
        } else {
            live[slot].next += 1;
        }
    }
}

/// Every stratum stop ranks within the bottom `floor(P n)` of its group, and
/// every such rank stops.
pub fn check_stratum_bound(stream: &EventStream, config: AceConfig<f64>) -> Result<(), TestCaseError> {
    let p = config.truncation_percentage;
    let hard = config.stopping_mode == StoppingMode::Hard;
    let mut ace = AceScheduler::new(config).unwrap();
    drive(&mut ace, stream, |ace, ctx, decision| {
        let is_last = ctx.iteration >= ctx.max_iterations;
        let standing = ace.history().standing(ctx.trial_id).expect("recorded");
        match decision.rank {
            Some(rank) => {
                prop_assert_eq!(rank.group, standing.group);
                let population = ace.history().standings_in(rank.group).count();
                prop_assert_eq!(rank.group_size, population);
                let bound = stratum_stop_count(p, rank.group_size);
                prop_assert!(bound as f64 <= p * rank.group_size as f64 + 1e-9);
                let stops = decision.action == Action::Stop;
                prop_assert_eq!(stops, rank.rank_from_worst <= bound, "rank {:?} bound {}", rank, bound);
            }
            None => {
                let hard_stop = hard && standing.group == CheckpointGroup::Invalid;
                prop_assert!(is_last || hard_stop, "no rank for a non-final checkpoint");
                prop_assert_eq!(decision.action == Action::Stop, hard_stop && !is_last);
            }
        }
        Ok(())
    })
}

/// `f*` never increases and always equals the best valid checkpoint.
pub fn check_fstar_monotone(stream: &EventStream, config: AceConfig<f64>) -> Result<(), TestCaseError> {
    let mut ace = AceScheduler::new(config).unwrap();
    let mut previous = f64::INFINITY;
    drive(&mut ace, stream, |ace, _, _| {
        let history = ace.history();
        let f_star = history.best_feasible_score();
        prop_assert!(f_star <= previous, "f* rose from {} to {}", previous, f_star);
        let best_valid = history
            .records()
            .iter()
            .filter(|r| r.group == CheckpointGroup::Valid)
            .map(|r| r.opt_metric)
            .fold(f64::INFINITY, f64::min);
        prop_assert_eq!(f_star, best_valid);
        previous = f_star;
        Ok(())
    })
}

/// Promotions at a rung never exceed `ceil(m / eta)`.
pub fn check_asha_promotions(stream: &EventStream, config: AshaConfig<f64>) -> Result<(), TestCaseError> {
    let eta = config.reduction_factor as usize;
    let mut asha = AshaScheduler::new(config).unwrap();
    let levels = asha.levels().to_vec();
    drive(&mut asha, stream, |asha, _, _| {
        for &level in &levels {
            for (group, m, promoted) in asha.pool_counts(level) {
                prop_assert!(
                    promoted <= m.div_ceil(eta),
                    "rung {} {:?}: {} promoted of {}",
                    level,
                    group,
                    promoted,
                    m
                );
            }
        }
        Ok(())
    })
}

pub fn preset(name: &str) -> &'static Problem {
    static FAIRNESS: OnceLock<Problem> = OnceLock::new();
    static ROBUSTNESS: OnceLock<Problem> = OnceLock::new();
    let cell = match name {
        FAIRNESS_LIKE => &FAIRNESS,
        ROBUSTNESS_LIKE => &ROBUSTNESS,
        other => panic!("no preset {other}"),
    };
    cell.get_or_init(|| Problem::preset(name).unwrap())
}

#[derive(Debug, Clone)]
pub struct SimCase {
    pub preset: &'static str,
    pub budget: f64,
    pub max_concurrent: usize,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
}

pub fn sim_case() -> impl Strategy<Value = SimCase> {
    let scheduler = prop_oneof![
        (0.05f64..0.9, any::<bool>()).prop_map(|(p, gate)| SchedulerConfig::Ace(AceArm {
            truncation_percentage: p,
            low_overhead_gate: gate,
            ..AceArm::default()
        })),
        prop::sample::select(vec![
            AshaConstraintMode::None,
            AshaConstraintMode::Callback,
            AshaConstraintMode::Stratum
        ])
        .prop_map(|constraint| SchedulerConfig::Asha(AshaArm {
            reduction_factor: 4,
            grace_period: 1,
            max_time_units: None,
            constraint,
            constraint_interval_fixed: true,
        })),
        any::<bool>().prop_map(|cb| SchedulerConfig::NoStopping(NoStoppingArm {
            constraint_callback: cb
        })),
    ];
    (
        prop::sample::select(vec![FAIRNESS_LIKE, ROBUSTNESS_LIKE]),
        20.0f64..250.0,
        1usize..=6,
        0u64..1_000,
        scheduler,
    )
        .prop_map(|(preset, budget, max_concurrent, seed, scheduler)| SimCase {
            preset,
            budget,
            max_concurrent,
            seed,
            scheduler,
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Every unit of simulated time a trial occupies is a charged cost, and the
/// reported totals match the per-trial charges.
pub fn check_cost_conservation(case: &SimCase) -> Result<(), TestCaseError> {
    let problem = preset(case.preset);
    let threshold = ConstraintSpec::new(problem.constraint_threshold()).unwrap();
    let mut scheduler = case
        .scheduler
        .build("probe", threshold, problem.space().max_trial_iterations())
        .unwrap();
    let settings = SimSettings {
        budget: case.budget,
        max_concurrent: case.max_concurrent,
        search_seed: case.seed,
    };
    let report = run_experiment(problem, scheduler.as_mut(), &settings).unwrap();

    let mut busy = 0.0;
    let mut charged = 0.0;
    for trial in &report.trials {
        busy += trial.end_time - trial.start_time;
        charged += f64::from(trial.iterations_run) * trial.primary_cost
            + f64::from(trial.constraint_evaluations) * trial.constraint_cost;
        if trial.status != TrialStatus::BudgetExhausted {
            prop_assert!(trial.start_time < case.budget);
        }
    }
    let scan_cost: f64 = report
        .trace
        .iter()
        .filter(|r| r.action == ace_core::sim::TraceAction::PostHoc)
        .map(|r| report.trials[r.trial_id as usize].constraint_cost)
        .sum();
    prop_assert!(close(busy, charged, 1e-9), "busy {} charged {}", busy, charged);
    prop_assert!(
        close(busy + scan_cost, report.total_cost(), 1e-9),
        "busy {} total {}",
        busy,
        report.total_cost()
    );
    if case.max_concurrent == 1 {
        prop_assert!(
            close(report.elapsed_time, report.total_cost(), 1e-12),
            "elapsed {} vs charged {}",
            report.elapsed_time,
            report.total_cost()
        );
    } else {
        prop_assert!(report.elapsed_time <= report.total_cost() * (1.0 + 1e-12));
    }
    let evaluations: u64 = report.trials.iter().map(|t| u64::from(t.constraint_evaluations)).sum();
    prop_assert_eq!(evaluations + report.post_hoc_evaluations, report.constraint_evaluations);
    Ok(())
}
