use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use ace_core::experiment::{
    cost_curve, cost_curve_preset, truncation_sweep, validate_theorem, write_cost_curve_csv, write_outputs,
    write_truncation_csv, Experiment, ExperimentConfig, SchedulerConfig, COST_CURVE_PRESETS,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Constraint-aware early stopping: simulated tuning experiments and cost
/// model utilities.
#[derive(Debug, Parser)]
#[command(name = "ace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every arm of a config on every seed and write traces and summaries.
    Run(RunArgs),
    /// Expected trial cost over every interval, as CSV.
    CostCurve(CostCurveArgs),
    /// Run ACE at several truncation percentages on the same candidates.
    TruncationSweep(SweepArgs),
    /// Check the interval rule against a brute-force scan on random settings.
    ValidateTheorem(TheoremArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    config: PathBuf,
    /// Overrides the config's seeds; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Overrides the config's output directory.
    #[arg(long, env = "ACE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<Experiment> {
        let config = ExperimentConfig::load(&self.config)?;
        let mut experiment = Experiment::new(config)?.with_seeds(self.seeds.clone());
        if let Some(dir) = &self.output_dir {
            experiment = experiment.with_output_dir(dir.clone());
        }
        Ok(experiment)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
struct CostCurveArgs {
    /// Stop probability.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Named sweep.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(COST_CURVE_PRESETS), conflicts_with_all = ["r", "t"])]
    preset: Option<String>,
    /// Cost ratios; with several, `--t` takes one value.
    #[arg(long, value_delimiter = ',')]
    r: Vec<f64>,
    /// Iteration counts; with several, `--r` takes one value.
    #[arg(long, value_delimiter = ',')]
    t: Vec<u32>,
    /// Cost of one training iteration.
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.03, 0.13, 0.25, 0.5, 0.75])]
    percentages: Vec<f64>,
}

#[derive(Debug, Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 10_000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: &RunArgs) -> Result<()> {
    let experiment = args.experiment.load()?;
    let results = experiment.run()?;
    let (files, _) = write_outputs(
        experiment.config(),
        experiment.problem().constraint_threshold(),
        &results,
    )?;
    let table = fs::read_to_string(&files.summary_txt)
        .with_context(|| format!("reading back {}", files.summary_txt.display()))?;
    print!("{table}");
    println!(
        "wrote {} traces, {} arm summaries, {} and {}",
        files.traces.len(),
        files.arm_summaries.len(),
        files.summary_csv.display(),
        files.summary_txt.display()
    );
    Ok(())
}

fn cost_curve_settings(args: &CostCurveArgs) -> Result<Vec<(f64, u32)>> {
    if let Some(name) = &args.preset {
        return Ok(cost_curve_preset(name).expect("clap restricts preset names"));
    }
    Ok(match (args.r.as_slice(), args.t.as_slice()) {
        ([], _) | (_, []) => bail!("give --preset, or both --r and --t"),
        ([r], ts) => ts.iter().map(|&t| (*r, t)).collect(),
        (rs, [t]) => rs.iter().map(|&r| (r, *t)).collect(),
        _ => bail!("--r and --t cannot both list several values"),
    })
}

fn write_to<F>(output: Option<&PathBuf>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write(&mut file).with_context(|| format!("writing {}", path.display()))
        }
        None => write(&mut io::stdout().lock()).context("writing to stdout"),
    }
}

fn cost_curve_cmd(args: &CostCurveArgs) -> Result<()> {
    let settings = cost_curve_settings(args)?;
    let rows = cost_curve(args.p, &settings, args.c2)?;
    write_to(args.output.as_ref(), |w| Ok(write_cost_curve_csv(w, &rows)?))
}

fn truncation_sweep_cmd(args: &SweepArgs) -> Result<()> {
    let experiment = args.experiment.load()?;
    let base = experiment
        .config()
        .arms
        .iter()
        .find_map(|a| match &a.scheduler {
            SchedulerConfig::Ace(ace) => Some(ace.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let rows = truncation_sweep(&experiment, &args.percentages, &base)?;
    let path = experiment.config().output_dir.join("truncation_sweep.csv");
    write_to(Some(&path), |w| Ok(write_truncation_csv(w, &rows)?))?;
    for row in &rows {
        println!(
            "P={:<5} success={:>4.0}% best feasible={} total trials={:.1}",
            row.percentage,
            100.0 * row.success_rate,
            row.best_feasible_score
                .mean
                .map_or("-".to_owned(), |m| format!("{m:.5}")),
            row.total_trials.mean.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn validate_theorem_cmd(args: &TheoremArgs) -> Result<()> {
    let sweep = validate_theorem(args.cases, args.seed);
    println!(
        "endpoint optimal: {}/{} (max relative excess {:.3e})",
        sweep.endpoint_optimal, sweep.cases, sweep.max_relative_excess
    );
    println!(
        "interval rule matches scan: {}/{} decisive cases",
        sweep.rule_matches, sweep.decisive
    );
    for case in &sweep.failures {
        println!(
            "  failing: p={} r={} T={} scan beta={} rule beta={}",
            case.stop_probability, case.cost_ratio, case.max_iterations, case.oracle_interval, case.chosen_interval
        );
    }
    if !sweep.passed() {
        bail!("{} of {} cases failed", sweep.failed, sweep.cases);
    }
    println!("PASS");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::CostCurve(args) => cost_curve_cmd(args),
        Command::TruncationSweep(args) => truncation_sweep_cmd(args),
        Command::ValidateTheorem(args) => validate_theorem_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
