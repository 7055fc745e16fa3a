//! Training loop and JSONL run logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, InitConfig, OptimizerKind};
use crate::data::{gen_synthetic, load_mnist_idx, Dataset, Sampler, SyntheticParams};
use crate::error::{Error, Result};
use crate::metrics::{self, EpochRecord};
use crate::models::ModelSpec;
use crate::optimizers::{MsgdState, RmdaState};
use crate::params::{GroupPartition, ParamVector};
use crate::regularizers::{zero_pattern, Regularizer};
use crate::schedule::Schedule;

/// Environment variable against which relative IDX paths are resolved.
pub const DATA_DIR_ENV: &str = "RMDA_DATA_DIR";

/// Final-window fraction used for pattern stability.
pub const STABLE_FRACTION: f64 = 0.2;

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        config: Box<ExperimentConfig>,
        #[serde(default)]
        overrides: Vec<String>,
        data_dir: Option<PathBuf>,
    },
    Epoch(EpochRecord),
    Summary(RunSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub epochs: u64,
    pub steps: u64,
    pub param_count: usize,
    pub final_train_accuracy: f64,
    pub final_val_accuracy: f64,
    pub final_group_sparsity: f64,
    pub final_unstructured_sparsity: f64,
    pub final_pattern_match: Option<f64>,
    pub pattern_stable: bool,
}

/// Records and summary of a finished run, plus the final iterates.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EpochRecord>,
    pub summary: RunSummary,
    /// Iterate used for accuracy (`W`).
    pub w: ParamVector,
    /// Iterate used for sparsity (`W~` for RMDA/RDA, `W` otherwise).
    pub structure: ParamVector,
}

/// Options recorded in the log header next to the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Command-line overrides already applied to the config, kept for the log.
    pub overrides: Vec<String>,
    /// Base directory for relative IDX paths; `None` reads `RMDA_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
}

impl RunOptions {
    fn resolved_data_dir(&self) -> Option<PathBuf> {
        self.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }
}

/// Training and validation splits of a config's data source.
pub fn load_data(config: &ExperimentConfig, data_dir: Option<&Path>) -> Result<(Dataset, Dataset)> {
    match &config.data {
        DataSource::Synthetic { n, val_n, zero_fraction, margin, weight_scale, seed } => {
            let partition = config.train_partition()?;
            let params = SyntheticParams {
                n: n + val_n,
                zero_fraction: *zero_fraction,
                margin: *margin,
                weight_scale: *weight_scale,
                seed: seed.unwrap_or(config.seed),
            };
            let all = gen_synthetic(&config.model, &partition, &params)?;
            if *val_n == 0 {
                Ok((all.clone(), all))
            } else {
                all.split_tail(*val_n)
            }
        }
        DataSource::Idx { train_images, train_labels, val_images, val_labels } => {
            let resolve = |p: &PathBuf| match data_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.clone(),
            };
            let train = load_mnist_idx(resolve(train_images), resolve(train_labels))?;
            let val = match (val_images, val_labels) {
                (Some(i), Some(l)) => load_mnist_idx(resolve(i), resolve(l))?,
                _ => train.clone(),
            };
            if train.in_dim() != config.model.in_dim() || train.classes() > config.model.classes() {
                return Err(Error::Data(format!(
                    "data has {} inputs and {} classes; the model expects {} and {}",
                    train.in_dim(),
                    train.classes(),
                    config.model.in_dim(),
                    config.model.classes()
                )));
            }
            Ok((train, val))
        }
    }
}

fn initial_point(config: &ExperimentConfig, train: &Dataset) -> Result<ParamVector> {
    match &config.init {
        InitConfig::Uniform => config.model.init(config.seed),
        InitConfig::Zeros => Ok(ParamVector::zeros(Arc::new(config.model.layout()?))),
        InitConfig::TruthNoise { sigma } => {
            let truth = train
                .ground_truth()
                .ok_or_else(|| Error::Config("truth_noise initialization needs synthetic data".into()))?;
            let normal = Normal::new(0.0, *sigma).map_err(|e| Error::Config(format!("init sigma: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let values = truth.params.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
            ParamVector::new(values, truth.params.layout().clone())
        }
    }
}

enum Trainer {
    Rmda { state: RmdaState, rda: bool },
    Msgd(MsgdState),
}

impl Trainer {
    fn new(config: &ExperimentConfig, w0: ParamVector, reg: Regularizer) -> Result<Self> {
        let opt = &config.optimizer;
        Ok(match opt.kind {
            OptimizerKind::Rmda => {
                let c = opt.c.clone().ok_or_else(|| Error::Config("rmda needs a `c` schedule".into()))?;
                Trainer::Rmda { state: RmdaState::new(w0, reg, opt.eta.clone(), c)?, rda: false }
            }
            OptimizerKind::Rda => {
                Trainer::Rmda { state: RmdaState::new(w0, reg, opt.eta.clone(), Schedule::constant(1.0))?, rda: true }
            }
            OptimizerKind::ProxSgd | OptimizerKind::Msgd => {
                Trainer::Msgd(MsgdState::new(w0, opt.momentum.unwrap_or(0.0), opt.eta.clone(), reg)?)
            }
        })
    }

    fn w(&self) -> &ParamVector {
        match self {
            Trainer::Rmda { state, .. } => state.w(),
            Trainer::Msgd(s) => s.w(),
        }
    }

    fn structure(&self) -> &ParamVector {
        match self {
            Trainer::Rmda { state, .. } => state.w_tilde(),
            Trainer::Msgd(s) => s.w(),
        }
    }

    fn step(&mut self, grad: &[f64], epoch: u64) -> Result<()> {
        match self {
            Trainer::Rmda { state, rda: false } => state.step(grad, epoch),
            Trainer::Rmda { state, rda: true } => state.rda_step(grad, epoch),
            Trainer::Msgd(s) => s.step(grad, epoch),
        }
    }
}

/// Sink for log lines; every line is flushed as soon as it is written so a
/// failed run keeps its last good record.
struct LogSink {
    out: Option<BufWriter<File>>,
}

impl LogSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(BufWriter::new(File::create(p)?))
            }
            None => None,
        };
        Ok(Self { out })
    }

    fn write(&mut self, line: &LogLine) -> Result<()> {
        if let Some(out) = &mut self.out {
            let text = serde_json::to_string(line).map_err(|e| Error::Numeric(format!("log line: {e}")))?;
            writeln!(out, "{text}")?;
            out.flush()?;
        }
        Ok(())
    }
}

/// Runs `config`, writing a JSONL log to `config.output` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<RunOutput> {
    train(config, options, &mut |_, _| {})
}

/// Training loop; `observe` sees the trainer at the start of every epoch,
/// after any restart.
fn train(config: &ExperimentConfig, options: &RunOptions, observe: &mut dyn FnMut(u64, &Trainer)) -> Result<RunOutput> {
    config.validate()?;
    let data_dir = options.resolved_data_dir();
    let mut sink = LogSink::open(config.output.as_deref())?;
    // the log path is where the record goes, not part of the experiment
    let logged = ExperimentConfig { output: None, ..config.clone() };
    sink.write(&LogLine::Header {
        config: Box::new(logged),
        overrides: options.overrides.clone(),
        data_dir: data_dir.clone(),
    })?;

    let (train, val) = load_data(config, data_dir.as_deref())?;
    let train_partition = config.train_partition()?;
    let eval_partition = config.eval_partition()?;
    let reg = config.regularizer.build(&train_partition)?;
    let w0 = initial_point(config, &train)?;
    let mut trainer = Trainer::new(config, w0, reg)?;
    let mut sampler = Sampler::new(&train, config.batch_size, config.augmentation, config.seed)?;
    let evaluator = Evaluator { config, spec: &config.model, train: &train, val: &val, eval_partition: &eval_partition };

    let mut records = Vec::new();
    let mut steps = 0u64;
    for epoch in 0..config.epochs {
        if let Trainer::Rmda { state, .. } = &mut trainer {
            if config.optimizer.restart_epochs.contains(&epoch) {
                state.restart();
            }
        }
        observe(epoch, &trainer);
        for batch in sampler.epoch() {
            let (_, grad) = config.model.loss_and_grad(trainer.w().values(), &batch.inputs, &batch.labels)?;
            trainer.step(&grad, epoch)?;
            steps += 1;
        }
        let done = epoch + 1;
        if done % config.log_every == 0 || done == config.epochs {
            let record = evaluator.record(&trainer, epoch)?;
            sink.write(&LogLine::Epoch(record.clone()))?;
            records.push(record);
        }
    }

    let last = records.last().expect("at least one epoch is logged");
    let patterns: Vec<&str> = records.iter().map(|r| r.zero_pattern.as_str()).collect();
    let summary = RunSummary {
        name: config.name.clone(),
        seed: config.seed,
        epochs: config.epochs,
        steps,
        param_count: config.model.param_count(),
        final_train_accuracy: last.train_accuracy,
        final_val_accuracy: last.val_accuracy,
        final_group_sparsity: last.group_sparsity,
        final_unstructured_sparsity: last.unstructured_sparsity,
        final_pattern_match: last.pattern_match,
        pattern_stable: metrics::pattern_stable(&patterns, STABLE_FRACTION),
    };
    sink.write(&LogLine::Summary(summary.clone()))?;
    Ok(RunOutput { records, summary, w: trainer.w().clone(), structure: trainer.structure().clone() })
}

struct Evaluator<'a> {
    config: &'a ExperimentConfig,
    spec: &'a ModelSpec,
    train: &'a Dataset,
    val: &'a Dataset,
    eval_partition: &'a GroupPartition,
}

impl Evaluator<'_> {
    fn record(&self, trainer: &Trainer, epoch: u64) -> Result<EpochRecord> {
        let w = trainer.w().values();
        let s = trainer.structure().values();
        let train_loss = self.spec.loss(w, self.train.inputs(), self.train.labels())?;
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {train_loss} at epoch {}", epoch + 1)));
        }
        let pattern_match = match self.train.ground_truth() {
            Some(truth) => Some(metrics::pattern_match(s, &truth.pattern, &truth.partition)?),
            None => None,
        };
        let vr_diagnostic = match trainer {
            Trainer::Rmda { state, .. } if self.config.vr_diagnostic && state.t() > 0 => {
                Some(metrics::vr_diagnostic(state, self.spec, self.train)?)
            }
            _ => None,
        };
        let momentum_c = match trainer {
            Trainer::Rmda { state, .. } => Some(state.momentum().value(epoch)),
            Trainer::Msgd(_) => None,
        };
        let gap: f64 = w.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_accuracy: metrics::accuracy(self.spec, w, self.train)?,
            val_accuracy: metrics::accuracy(self.spec, w, self.val)?,
            group_sparsity: metrics::group_sparsity(s, self.eval_partition)?,
            unstructured_sparsity: metrics::unstructured_sparsity(s, None)?,
            pattern_match,
            vr_diagnostic,
            iterate_gap: gap,
            learning_rate: self.config.optimizer.eta.value(epoch),
            momentum_c,
            zero_pattern: metrics::pattern_string(&zero_pattern(s, self.eval_partition)?),
        })
    }
}

/// Runs `config` once per seed on separate threads. Log paths get a
/// `.seed<N>` suffix before the extension.
pub fn run_seeds(config: &ExperimentConfig, seeds: &[u64], options: &RunOptions) -> Vec<Result<RunOutput>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut c = config.clone();
                c.seed = seed;
                c.output = c.output.as_deref().map(|p| seeded_path(p, seed));
                scope.spawn(move || run_experiment_with(&c, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numeric("run thread panicked".into()))))
            .collect()
    })
}

pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

/// Parses a JSONL run log.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogLine>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn restarts_reset_the_dual_average() {
        let mut config = presets::load("synthetic-logreg").unwrap();
        config.epochs = 12;
        config.optimizer.restart_epochs = vec![4, 9];
        config.vr_diagnostic = false;
        let mut seen = Vec::new();
        train(&config, &RunOptions::default(), &mut |epoch, trainer| {
            if let Trainer::Rmda { state, .. } = trainer {
                seen.push((epoch, state.alpha(), state.t(), state.w0().clone() == *state.w()));
            }
        })
        .unwrap();
        assert_eq!(seen.len(), 12);
        for (epoch, alpha, t, anchored) in seen {
            if [0, 4, 9].contains(&epoch) {
                assert_eq!((alpha, t, anchored), (0.0, 0, true), "epoch {epoch}");
            } else {
                assert!(alpha > 0.0 && t > 0, "epoch {epoch}");
            }
        }
    }

    #[test]
    fn failed_runs_keep_their_last_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut config = presets::load("synthetic-logreg").unwrap();
        config.epochs = 6;
        config.optimizer.restart_epochs.clear();
        config.optimizer.eta = Schedule::Table { steps: vec![(0, 0.1), (3, 1e308)] };
        config.output = Some(path.clone());
        let err = run_experiment(&config).unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Numeric, "{err}");
        let lines = read_log(&path).unwrap();
        assert!(matches!(lines[0], LogLine::Header { .. }));
        let epochs: Vec<u64> = lines
            .iter()
            .filter_map(|l| match l {
                LogLine::Epoch(r) => Some(r.epoch),
                _ => None,
            })
            .collect();
        assert_eq!(epochs, vec![1, 2, 3]);
        assert!(!lines.iter().any(|l| matches!(l, LogLine::Summary(_))));
    }

    #[test]
    fn seeded_paths() {
        assert_eq!(seeded_path(Path::new("out/run.jsonl"), 3), PathBuf::from("out/run.seed3.jsonl"));
        assert_eq!(seeded_path(Path::new("run"), 0), PathBuf::from("run.seed0"));
    }
}
