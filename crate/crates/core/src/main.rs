use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rmda::data::Dataset;
use rmda::harness::config::check_distinct;
use rmda::harness::{self, presets, run, ExperimentConfig, OptimizerKind, RunOptions};
use rmda::schedule::{validate_schedule, ScheduleReport};
use rmda::{Error, ErrorCategory, Result};

#[derive(Parser)]
#[command(name = "rmda", version, about = "Regularized dual-averaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train according to a config file (or `preset:<name>`).
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Seeds run in parallel; logs get a `.seed<N>` suffix. Without
        /// `--seed` or `--seeds` the config's `seeds` list is used.
        #[arg(long, num_args = 1.., conflicts_with = "seed")]
        seeds: Vec<u64>,
        /// JSONL log path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key.path=value` config overrides.
        #[arg(long = "set")]
        set: Vec<String>,
        /// Base directory for relative IDX paths (default: $RMDA_DATA_DIR).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Summarize run logs side by side.
    Compare { logs: Vec<PathBuf> },
    /// Check the step-size conditions for a config's learning-rate schedule.
    ValidateSchedule {
        config: String,
        /// Steps per epoch; computed from the data when omitted.
        #[arg(long)]
        steps_per_epoch: Option<u64>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write a config's synthetic training data as JSON.
    GenData {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a bundled config, or list them without a name.
    Preset { name: Option<String> },
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
    }
}

fn load_config(arg: &str) -> Result<ExperimentConfig> {
    match arg.strip_prefix("preset:") {
        Some(name) => presets::load(name),
        None => ExperimentConfig::load(arg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, seed, seeds, out, mut set, data_dir } => {
            if let Some(seed) = seed {
                set.push(format!("seed={seed}"));
            }
            if let Some(out) = &out {
                set.push(format!("output={:?}", out.display().to_string()));
            }
            let config = harness::apply_overrides(&load_config(&config)?, &set)?;
            let options = RunOptions { overrides: set, data_dir };
            let seeds = match (seed, seeds.is_empty()) {
                (None, true) => config.seeds.clone(),
                _ => seeds,
            };
            check_distinct(&seeds)?;
            if seeds.is_empty() {
                let output = harness::run_experiment_with(&config, &options)?;
                println!("{}", serde_json::to_string_pretty(&output.summary).expect("summary serializes"));
                return Ok(ExitCode::SUCCESS);
            }
            let mut first_error = None;
            for (seed, result) in seeds.iter().zip(harness::run_seeds(&config, &seeds, &options)) {
                match result {
                    Ok(o) => println!("{}", serde_json::to_string(&o.summary).expect("summary serializes")),
                    Err(e) => {
                        eprintln!("seed {seed}: error: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            match first_error {
                Some(e) => Ok(ExitCode::from(exit_code(&e))),
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Compare { logs } => {
            let rows = harness::compare_logs(&logs);
            print!("{}", harness::compare::render(&rows));
            let failed = rows.iter().find_map(|r| r.outcome.as_ref().err());
            Ok(failed.map_or(ExitCode::SUCCESS, |e| ExitCode::from(exit_code(e))))
        }
        Command::ValidateSchedule { config, steps_per_epoch, data_dir } => {
            let config = load_config(&config)?;
            let spe = match steps_per_epoch {
                Some(s) if s > 0 => s,
                Some(_) => return Err(Error::Config("steps_per_epoch must be at least 1".into())),
                None => {
                    let dir = data_dir.or_else(|| std::env::var_os(run::DATA_DIR_ENV).map(PathBuf::from));
                    let (train, _) = run::load_data(&config, dir.as_deref())?;
                    train.len().div_ceil(config.batch_size) as u64
                }
            };
            let reports = schedule_reports(&config, spe)?;
            println!("{}", serde_json::to_string_pretty(&reports).expect("report serializes"));
            let ok = reports.last().is_some_and(|r| r.report.passed());
            println!("{}", if ok { "schedule: PASS" } else { "schedule: FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::GenData { config, out } => {
            let config = load_config(&config)?;
            let (train, _) = run::load_data(&config, None)?;
            let text = serde_json::to_string(&DatasetJson::from(&train)).expect("dataset serializes");
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name: Some(name) } => {
            print!("{}", presets::source(&name)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name: None } => {
            presets::names().for_each(|n| println!("{n}"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[derive(Serialize)]
struct RoundReport {
    start_epoch: u64,
    report: ScheduleReport,
}

/// One report per restart round, each with `t` counted from the round's
/// start; the final round decides.
fn schedule_reports(config: &ExperimentConfig, steps_per_epoch: u64) -> Result<Vec<RoundReport>> {
    let mut starts = vec![0];
    if config.optimizer.kind.is_dual_averaging() {
        starts.extend(&config.optimizer.restart_epochs);
    } else if config.optimizer.kind == OptimizerKind::Msgd {
        return Err(Error::Config("msgd has no dual-averaging weights to check".into()));
    }
    starts
        .iter()
        .map(|&start| {
            let steps = (config.epochs - start) * steps_per_epoch;
            let eta = |t: u64| config.optimizer.eta.value(start + (t - 1) / steps_per_epoch);
            Ok(RoundReport { start_epoch: start, report: validate_schedule(eta, steps.max(1000))? })
        })
        .collect()
}

#[derive(Serialize)]
struct DatasetJson<'a> {
    in_dim: usize,
    classes: usize,
    inputs: Vec<&'a [f64]>,
    labels: &'a [usize],
    truth_params: Option<&'a [f64]>,
    /// `true` for groups that are zero in the ground truth.
    truth_zero_groups: Option<&'a [bool]>,
}

impl<'a> From<&'a Dataset> for DatasetJson<'a> {
    fn from(d: &'a Dataset) -> Self {
        Self {
            in_dim: d.in_dim(),
            classes: d.classes(),
            inputs: d.inputs().chunks(d.in_dim()).collect(),
            labels: d.labels(),
            truth_params: d.ground_truth().map(|t| t.params.values()),
            truth_zero_groups: d.ground_truth().map(|t| t.pattern.as_slice()),
        }
    }
}
