//! Trace CSVs, per-arm JSON and the combined summary table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::sim::{ExperimentReport, TraceRow};

use super::{summarize, ArmSummary, ExperimentConfig, ExperimentError, RunResult, SchedulerConfig, Stat};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

fn opt_float(value: Option<f64>) -> String {
    value.map(format_float).unwrap_or_default()
}

fn opt_int<T: ToString>(value: Option<T>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv {
        path: path.to_owned(),
        source,
    }
}

const TRACE_HEADER: [&str; 13] = [
    "sim_time",
    "trial_id",
    "iteration",
    "opt_metric",
    "action",
    "interval",
    "constraint_checkpoint",
    "checkpoint_opt_metric",
    "constraint_value",
    "group",
    "violation_amount",
    "rank_from_worst",
    "group_size",
];

fn trace_record(row: &TraceRow) -> [String; 13] {
    [
        format_float(row.sim_time),
        row.trial_id.to_string(),
        row.iteration.to_string(),
        format_float(row.opt_metric),
        row.action.as_str().to_owned(),
        opt_int(row.interval),
        opt_int(row.constraint_checkpoint),
        opt_float(row.checkpoint_opt_metric),
        opt_float(row.constraint_value),
        row.group.as_str().to_owned(),
        opt_float(row.violation_amount),
        opt_int(row.rank_from_worst),
        opt_int(row.group_size),
    ]
}

pub fn write_trace_csv(path: &Path, report: &ExperimentReport) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer.write_record(TRACE_HEADER).map_err(csv_err(path))?;
    for row in &report.trace {
        writer.write_record(trace_record(row)).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct ArmFile<'a> {
    arm: &'a str,
    scheduler_config: &'a SchedulerConfig,
    problem: &'a str,
    constraint_threshold: f64,
    budget: f64,
    max_concurrent: usize,
    runs: Vec<&'a ExperimentReport>,
    aggregate: &'a ArmSummary,
}

const SUMMARY_HEADER: [&str; 14] = [
    "arm",
    "scheduler",
    "runs",
    "success_rate",
    "best_feasible_score_mean",
    "best_feasible_score_sd",
    "time_to_best_mean",
    "time_to_best_sd",
    "total_trials_mean",
    "total_trials_sd",
    "constraint_evaluations_mean",
    "constraint_evaluations_sd",
    "beta_one_fraction_mean",
    "measured_cost_ratio_mean",
];

fn summary_record(s: &ArmSummary) -> [String; 14] {
    [
        s.arm.clone(),
        s.scheduler.clone(),
        s.runs.to_string(),
        format_float(s.success_rate),
        opt_float(s.best_feasible_score.mean),
        opt_float(s.best_feasible_score.sd),
        opt_float(s.time_to_best.mean),
        opt_float(s.time_to_best.sd),
        opt_float(s.total_trials.mean),
        opt_float(s.total_trials.sd),
        opt_float(s.constraint_evaluations.mean),
        opt_float(s.constraint_evaluations.sd),
        opt_float(s.beta_one_fraction.mean),
        opt_float(s.measured_cost_ratio.mean),
    ]
}

fn mean_sd(stat: &Stat, digits: usize) -> String {
    match (stat.mean, stat.sd) {
        (Some(m), Some(sd)) => format!("{m:.digits$} ± {sd:.digits$}"),
        (Some(m), None) => format!("{m:.digits$}"),
        _ => "-".to_owned(),
    }
}

fn summary_text(summaries: &[ArmSummary]) -> String {
    let header = [
        "arm",
        "success",
        "best feasible",
        "time to best",
        "total trials",
        "constraint evals",
    ];
    let rows: Vec<[String; 6]> = summaries
        .iter()
        .map(|s| {
            [
                s.arm.clone(),
                format!("{:.0}%", 100.0 * s.success_rate),
                mean_sd(&s.best_feasible_score, 4),
                mean_sd(&s.time_to_best, 1),
                mean_sd(&s.total_trials, 1),
                mean_sd(&s.constraint_evaluations, 1),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub traces: Vec<PathBuf>,
    pub arm_summaries: Vec<PathBuf>,
    pub summary_csv: PathBuf,
    pub summary_txt: PathBuf,
}

/// Writes `traces/<arm>_seed<seed>.csv`, `<arm>_summary.json`,
/// `summary.csv` and `summary.txt` under the config's output directory.
pub fn write_outputs(
    config: &ExperimentConfig,
    constraint_threshold: f64,
    results: &[RunResult],
) -> Result<(OutputFiles, Vec<ArmSummary>), ExperimentError> {
    let dir = &config.output_dir;
    let trace_dir = dir.join("traces");
    fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;

    let mut traces = Vec::new();
    for r in results {
        let path = trace_dir.join(format!("{}_seed{}.csv", r.arm, r.seed));
        write_trace_csv(&path, &r.report)?;
        traces.push(path);
    }

    let summaries = summarize(results);
    let mut arm_summaries = Vec::new();
    for summary in &summaries {
        let arm = config
            .arms
            .iter()
            .find(|a| a.name == summary.arm)
            .expect("results come from configured arms");
        let file = ArmFile {
            arm: &arm.name,
            scheduler_config: &arm.scheduler,
            problem: &config.problem.preset,
            constraint_threshold,
            budget: config.budget,
            max_concurrent: config.max_concurrent,
            runs: results
                .iter()
                .filter(|r| r.arm == arm.name)
                .map(|r| &r.report)
                .collect(),
            aggregate: summary,
        };
        let path = dir.join(format!("{}_summary.json", arm.name));
        let mut text = serde_json::to_string_pretty(&file).expect("summaries serialize");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        arm_summaries.push(path);
    }

    let summary_csv = dir.join("summary.csv");
    let mut writer = csv::Writer::from_path(&summary_csv).map_err(csv_err(&summary_csv))?;
    writer.write_record(SUMMARY_HEADER).map_err(csv_err(&summary_csv))?;
    for s in &summaries {
        writer.write_record(summary_record(s)).map_err(csv_err(&summary_csv))?;
    }
    writer.flush().map_err(io_err(&summary_csv))?;

    let summary_txt = dir.join("summary.txt");
    fs::write(&summary_txt, summary_text(&summaries)).map_err(io_err(&summary_txt))?;

    Ok((
        OutputFiles {
            traces,
            arm_summaries,
            summary_csv,
            summary_txt,
        },
        summaries,
    ))
}
