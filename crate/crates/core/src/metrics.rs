//! Sparsity, structure identification, accuracy and variance-reduction
//! metrics. Zero detection is exact (`== 0.0`).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::optimizers::RmdaState;
use crate::params::{norm, GroupPartition};
use crate::regularizers::zero_pattern;

/// One logged row. Accuracy is measured on `W`; sparsity and pattern
/// metrics on the proximal iterate (`W~` for RMDA/RDA, `W` otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub group_sparsity: f64,
    pub unstructured_sparsity: f64,
    pub pattern_match: Option<f64>,
    pub vr_diagnostic: Option<f64>,
    pub iterate_gap: f64,
    pub learning_rate: f64,
    pub momentum_c: Option<f64>,
    /// One character per evaluation group: `0` for an all-zero group, `1` otherwise.
    pub zero_pattern: String,
}

/// Fraction of groups whose coordinates are all exactly zero.
pub fn group_sparsity(w: &[f64], partition: &GroupPartition) -> Result<f64> {
    let pattern = zero_pattern(w, partition)?;
    if pattern.is_empty() {
        return Ok(0.0);
    }
    Ok(pattern.iter().filter(|z| **z).count() as f64 / pattern.len() as f64)
}

/// Fraction of groups whose zero/non-zero status matches `truth`.
pub fn pattern_match(w: &[f64], truth: &[bool], partition: &GroupPartition) -> Result<f64> {
    if truth.len() != partition.len() {
        return Err(Error::structural(format!(
            "truth pattern of length {} for {} groups",
            truth.len(),
            partition.len()
        )));
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let pattern = zero_pattern(w, partition)?;
    let hits = pattern.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of exactly-zero coordinates; restricted to the coordinates
/// covered by `regularized` when given.
pub fn unstructured_sparsity(w: &[f64], regularized: Option<&GroupPartition>) -> Result<f64> {
    let (zeros, total) = match regularized {
        Some(p) => {
            p.check_dim(w.len())?;
            let zeros = p.groups().iter().flatten().filter(|&&i| w[i] == 0.0).count();
            (zeros, p.covered_count())
        }
        None => (w.iter().filter(|x| **x == 0.0).count(), w.len()),
    };
    Ok(if total == 0 { 0.0 } else { zeros as f64 / total as f64 })
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy(spec: &ModelSpec, w: &[f64], data: &Dataset) -> Result<f64> {
    let predicted = spec.predict(w, data.inputs())?;
    let hits = predicted.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

/// `|| V^t / alpha_t - grad f(W^{t-1}) ||` with the full gradient over `data`.
pub fn vr_diagnostic(state: &RmdaState, spec: &ModelSpec, data: &Dataset) -> Result<f64> {
    if state.t() == 0 {
        return Err(Error::Numeric("variance diagnostic is undefined before the first step".into()));
    }
    let full = spec.full_gradient(state.prev_w(), data)?;
    // ||V - alpha g|| / alpha: exact zero when every sampled gradient was the full one
    let alpha = state.alpha();
    let diff: Vec<f64> = state.v().iter().zip(&full).map(|(v, g)| v - alpha * g).collect();
    Ok(norm(&diff) / alpha)
}

/// `true` when every pattern in the final `ceil(fraction * len)` entries
/// equals the last one.
pub fn pattern_stable<S: AsRef<str>>(patterns: &[S], fraction: f64) -> bool {
    let Some(last) = patterns.last() else { return true };
    let k = ((fraction * patterns.len() as f64).ceil() as usize).clamp(1, patterns.len());
    patterns[patterns.len() - k..].iter().all(|p| p.as_ref() == last.as_ref())
}

pub fn pattern_string(pattern: &[bool]) -> String {
    pattern.iter().map(|z| if *z { '0' } else { '1' }).collect()
}
