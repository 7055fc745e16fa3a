//! Side-by-side summary of run logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{read_log, LogLine, RunSummary};
use crate::error::{Error, Result};

/// One row per log; unreadable or incomplete logs keep their error.
#[derive(Debug)]
pub struct CompareRow {
    pub path: PathBuf,
    pub outcome: Result<RowData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowData {
    pub name: String,
    pub optimizer: String,
    pub seed: u64,
    pub epochs_logged: usize,
    /// `None` when the run ended before writing its summary.
    pub summary: Option<RunSummary>,
    pub last_val_accuracy: f64,
    pub last_group_sparsity: f64,
    pub last_pattern_match: Option<f64>,
}

pub fn compare_logs<P: AsRef<Path>>(paths: &[P]) -> Vec<CompareRow> {
    paths
        .iter()
        .map(|p| CompareRow { path: p.as_ref().to_path_buf(), outcome: summarize(p.as_ref()) })
        .collect()
}

fn summarize(path: &Path) -> Result<RowData> {
    let lines = read_log(path)?;
    let Some(LogLine::Header { config, .. }) = lines.first() else {
        return Err(Error::Data(format!("{}: missing header line", path.display())));
    };
    let epochs: Vec<_> = lines
        .iter()
        .filter_map(|l| match l {
            LogLine::Epoch(r) => Some(r),
            _ => None,
        })
        .collect();
    let last = epochs.last().ok_or_else(|| Error::Data(format!("{}: no epoch records", path.display())))?;
    let summary = lines.iter().find_map(|l| match l {
        LogLine::Summary(s) => Some(s.clone()),
        _ => None,
    });
    Ok(RowData {
        name: config.name.clone(),
        optimizer: format!("{:?}", config.optimizer.kind).to_lowercase(),
        seed: config.seed,
        epochs_logged: epochs.len(),
        summary,
        last_val_accuracy: last.val_accuracy,
        last_group_sparsity: last.group_sparsity,
        last_pattern_match: last.pattern_match,
    })
}

pub fn render(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<8} {:>6} {:>7} {:>9} {:>9} {:>8} {:>7}  log",
        "name", "opt", "seed", "epochs", "val_acc", "group_sp", "pattern", "stable"
    );
    for row in rows {
        match &row.outcome {
            Ok(d) => {
                let pattern = d.last_pattern_match.map_or("-".to_string(), |p| format!("{:.3}", p));
                let stable = match &d.summary {
                    Some(s) => s.pattern_stable.to_string(),
                    None => "partial".to_string(),
                };
                let _ = writeln!(
                    out,
                    "{:<28} {:<8} {:>6} {:>7} {:>8.2}% {:>8.2}% {:>8} {:>7}  {}",
                    d.name,
                    d.optimizer,
                    d.seed,
                    d.epochs_logged,
                    100.0 * d.last_val_accuracy,
                    100.0 * d.last_group_sparsity,
                    pattern,
                    stable,
                    row.path.display()
                );
            }
            Err(e) => {
                let _ = writeln!(out, "error: {}: {e}", row.path.display());
            }
        }
    }
    out
}
