//! Experiment harness: TOML configs, the training loop, JSONL logs and
//! log comparison.

pub mod compare;
pub mod config;
pub mod presets;
pub mod run;

pub use compare::{compare_logs, CompareRow};
pub use config::{DataSource, ExperimentConfig, GroupingConfig, InitConfig, OptimizerConfig, OptimizerKind, RegularizerConfig};
pub use run::{read_log, run_experiment, run_experiment_with, run_seeds, LogLine, RunOptions, RunOutput, RunSummary};

use crate::error::{Error, Result};

/// Applies `key.path=value` overrides to a config. Values are parsed as TOML
/// and fall back to plain strings.
pub fn apply_overrides(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut root = toml::Table::try_from(config).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for part in parents {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{o}`: `{part}` is not a table")))?;
        }
        table.insert(last.to_string(), value);
    }
    let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::from_toml_str(&text)
}
