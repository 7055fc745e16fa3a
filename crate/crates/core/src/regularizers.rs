//! Sparsity-inducing regularizers with exact values and proximal maps.
//!
//! Every proximal map returns exact zeros (no tolerance) for coordinates or
//! groups it switches off, so downstream sparsity metrics compare against
//! `0.0` directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{group_norm, GroupPartition};

/// Regularizer `psi`.
///
/// Group terms act only on the coordinates covered by the partition; the
/// ℓ1 part of the sparse-group kinds is restricted to the same coordinates.
/// Plain [`Regularizer::L1`] acts on every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    L1 {
        lambda: f64,
    },
    GroupLasso {
        lambda: f64,
        partition: GroupPartition,
    },
    SparseGroupLasso {
        lambda_l1: f64,
        lambda_group: f64,
        partition: GroupPartition,
    },
    /// Group MCP with per-group `lambda_g = lambda * w_g`, `omega_g = omega * w_g`.
    GroupMcp {
        lambda: f64,
        omega: f64,
        partition: GroupPartition,
    },
    L1GroupMcp {
        lambda_l1: f64,
        lambda_group: f64,
        omega: f64,
        partition: GroupPartition,
    },
    /// Indicator of the box `[lo, hi]^d`.
    BoxIndicator {
        lo: f64,
        hi: f64,
    },
}

/// Serializable tag for [`Regularizer`] kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    L1,
    GroupLasso,
    SparseGroupLasso,
    GroupMcp,
    L1GroupMcp,
    BoxIndicator,
}

/// Scalar MCP `lambda r - r^2 / (2 omega)` below `omega lambda`, flat
/// `omega lambda^2 / 2` above.
pub fn mcp(r: f64, lambda: f64, omega: f64) -> f64 {
    if r < omega * lambda {
        lambda * r - r * r / (2.0 * omega)
    } else {
        omega * lambda * lambda / 2.0
    }
}

/// `sign(x) max(|x| - threshold, 0)`.
#[inline]
pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// Group soft threshold: scale `v[idx]` by `max(1 - threshold / ||v[idx]||, 0)`.
fn group_soft_threshold(v: &mut [f64], idx: &[usize], threshold: f64) {
    let r = group_norm(v, idx);
    if r <= threshold {
        idx.iter().for_each(|&i| v[i] = 0.0);
    } else {
        let scale = 1.0 - threshold / r;
        idx.iter().for_each(|&i| v[i] *= scale);
    }
}

/// Firm threshold on the group norm; proximal map of `tau * MCP(.; lambda, omega)`
/// for `tau < omega`.
fn group_firm_threshold(v: &mut [f64], idx: &[usize], tau: f64, lambda: f64, omega: f64) {
    let r = group_norm(v, idx);
    let threshold = tau * lambda;
    if r <= threshold {
        idx.iter().for_each(|&i| v[i] = 0.0);
    } else if r <= omega * lambda {
        let scale = ((r - threshold) / (1.0 - tau / omega)) / r;
        idx.iter().for_each(|&i| v[i] *= scale);
    }
}

impl Regularizer {
    pub fn kind(&self) -> RegularizerKind {
        match self {
            Regularizer::None => RegularizerKind::None,
            Regularizer::L1 { .. } => RegularizerKind::L1,
            Regularizer::GroupLasso { .. } => RegularizerKind::GroupLasso,
            Regularizer::SparseGroupLasso { .. } => RegularizerKind::SparseGroupLasso,
            Regularizer::GroupMcp { .. } => RegularizerKind::GroupMcp,
            Regularizer::L1GroupMcp { .. } => RegularizerKind::L1GroupMcp,
            Regularizer::BoxIndicator { .. } => RegularizerKind::BoxIndicator,
        }
    }

    pub fn partition(&self) -> Option<&GroupPartition> {
        match self {
            Regularizer::GroupLasso { partition, .. }
            | Regularizer::SparseGroupLasso { partition, .. }
            | Regularizer::GroupMcp { partition, .. }
            | Regularizer::L1GroupMcp { partition, .. } => Some(partition),
            _ => None,
        }
    }

    /// Parameter-domain checks: non-negative weights, `omega > 1`, `lo <= hi`.
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::parameter(format!("{name} must be finite and non-negative, got {x}")))
            }
        };
        let omega_ok = |omega: f64| {
            if omega.is_finite() && omega > 1.0 {
                Ok(())
            } else {
                Err(Error::parameter(format!("omega must exceed 1, got {omega}")))
            }
        };
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::L1 { lambda } | Regularizer::GroupLasso { lambda, .. } => nonneg("lambda", lambda),
            Regularizer::SparseGroupLasso { lambda_l1, lambda_group, .. } => {
                nonneg("lambda_l1", lambda_l1)?;
                nonneg("lambda_group", lambda_group)
            }
            Regularizer::GroupMcp { lambda, omega, .. } => {
                nonneg("lambda", lambda)?;
                omega_ok(omega)
            }
            Regularizer::L1GroupMcp { lambda_l1, lambda_group, omega, .. } => {
                nonneg("lambda_l1", lambda_l1)?;
                nonneg("lambda_group", lambda_group)?;
                omega_ok(omega)
            }
            Regularizer::BoxIndicator { lo, hi } => {
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    Err(Error::parameter(format!("box bounds [{lo}, {hi}] are invalid")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        match self.partition() {
            Some(p) => p.check_dim(len),
            None => Ok(()),
        }
    }

    /// `psi(w)`. The box indicator evaluates to `+inf` outside the box.
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w.len())?;
        let l1_on = |p: &GroupPartition| p.groups().iter().flatten().map(|&i| w[i].abs()).sum::<f64>();
        let glasso = |p: &GroupPartition| p.iter().map(|(idx, wg)| wg * group_norm(w, idx)).sum::<f64>();
        let gmcp = |p: &GroupPartition, lambda: f64, omega: f64| {
            p.iter().map(|(idx, wg)| mcp(group_norm(w, idx), lambda * wg, omega * wg)).sum::<f64>()
        };
        Ok(match self {
            Regularizer::None => 0.0,
            Regularizer::L1 { lambda } => lambda * w.iter().map(|x| x.abs()).sum::<f64>(),
            Regularizer::GroupLasso { lambda, partition } => lambda * glasso(partition),
            Regularizer::SparseGroupLasso { lambda_l1, lambda_group, partition } => {
                lambda_l1 * l1_on(partition) + lambda_group * glasso(partition)
            }
            Regularizer::GroupMcp { lambda, omega, partition } => gmcp(partition, *lambda, *omega),
            Regularizer::L1GroupMcp { lambda_l1, lambda_group, omega, partition } => {
                lambda_l1 * l1_on(partition) + gmcp(partition, *lambda_group, *omega)
            }
            Regularizer::BoxIndicator { lo, hi } => {
                if w.iter().all(|x| (*lo..=*hi).contains(x)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    /// Rejects step sizes for which the firm threshold is not the proximal
    /// map of the MCP terms (`tau >= omega_g` for some group).
    pub fn check_step(&self, tau: f64) -> Result<()> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::parameter(format!("prox step must be positive, got {tau}")));
        }
        let (lambda, omega, partition) = match self {
            Regularizer::GroupMcp { lambda, omega, partition } => (*lambda, *omega, partition),
            Regularizer::L1GroupMcp { lambda_group, omega, partition, .. } => (*lambda_group, *omega, partition),
            _ => return Ok(()),
        };
        if lambda == 0.0 {
            return Ok(());
        }
        let min_weight = partition.weights().iter().copied().fold(f64::INFINITY, f64::min);
        if tau >= omega * min_weight {
            return Err(Error::parameter(format!(
                "prox step {tau} is not below omega_g = {} for every group",
                omega * min_weight
            )));
        }
        Ok(())
    }

    /// Proximal map `argmin_u ||u - v||^2 / 2 + tau psi(u)`.
    pub fn prox(&self, v: &[f64], tau: f64) -> Result<Vec<f64>> {
        let mut u = v.to_vec();
        self.prox_in_place(&mut u, tau)?;
        Ok(u)
    }

    /// In-place variant of [`Regularizer::prox`]. On error `v` is untouched.
    ///
    /// The sparse-group kinds apply the elementwise soft threshold first and
    /// the group threshold second; the ℓ1 + MCP kind uses the same order.
    pub fn prox_in_place(&self, v: &mut [f64], tau: f64) -> Result<()> {
        self.check_dim(v.len())?;
        self.check_step(tau)?;
        if let Some(i) = v.iter().position(|x| x.is_nan()) {
            return Err(Error::Input(format!("NaN at index {i} in prox input")));
        }
        match self {
            Regularizer::None => {}
            Regularizer::L1 { lambda } => {
                let th = tau * lambda;
                v.iter_mut().for_each(|x| *x = soft_threshold(*x, th));
            }
            Regularizer::GroupLasso { lambda, partition } => {
                for (idx, wg) in partition.iter() {
                    group_soft_threshold(v, idx, tau * lambda * wg);
                }
            }
            Regularizer::SparseGroupLasso { lambda_l1, lambda_group, partition } => {
                let th = tau * lambda_l1;
                for (idx, wg) in partition.iter() {
                    idx.iter().for_each(|&i| v[i] = soft_threshold(v[i], th));
                    group_soft_threshold(v, idx, tau * lambda_group * wg);
                }
            }
            Regularizer::GroupMcp { lambda, omega, partition } => {
                for (idx, wg) in partition.iter() {
                    group_firm_threshold(v, idx, tau, lambda * wg, omega * wg);
                }
            }
            Regularizer::L1GroupMcp { lambda_l1, lambda_group, omega, partition } => {
                let th = tau * lambda_l1;
                for (idx, wg) in partition.iter() {
                    idx.iter().for_each(|&i| v[i] = soft_threshold(v[i], th));
                    group_firm_threshold(v, idx, tau, lambda_group * wg, omega * wg);
                }
            }
            Regularizer::BoxIndicator { lo, hi } => {
                v.iter_mut().for_each(|x| *x = x.clamp(*lo, *hi));
            }
        }
        Ok(())
    }

    /// Group-wise zero pattern of `w` under `eval` (see [`zero_pattern`]).
    pub fn zero_pattern(&self, w: &[f64], eval: &GroupPartition) -> Result<Vec<bool>> {
        zero_pattern(w, eval)
    }
}

/// Entry `g` is `true` iff every coordinate of group `g` is exactly zero.
pub fn zero_pattern(w: &[f64], partition: &GroupPartition) -> Result<Vec<bool>> {
    partition.check_dim(w.len())?;
    Ok(partition.groups().iter().map(|idx| idx.iter().all(|&i| w[i] == 0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_group(dim: usize) -> GroupPartition {
        GroupPartition::new(dim, vec![(0..dim).collect()], vec![1.0]).unwrap()
    }

    #[test]
    fn values() {
        let gl = Regularizer::GroupLasso { lambda: 1.0, partition: one_group(2) };
        assert_eq!(gl.value(&[3.0, 4.0]).unwrap(), 5.0);

        let gm = Regularizer::GroupMcp { lambda: 1.0, omega: 2.0, partition: one_group(2) };
        assert_eq!(gm.value(&[3.0, 0.0]).unwrap(), 1.0);
        // unsaturated branch: r - r^2 / 4 at r = 1
        assert_eq!(gm.value(&[1.0, 0.0]).unwrap(), 0.75);

        assert_eq!(Regularizer::L1 { lambda: 0.5 }.value(&[-2.0, 1.0, 0.0]).unwrap(), 1.5);

        let boxed = Regularizer::BoxIndicator { lo: 0.0, hi: 1.0 };
        assert_eq!(boxed.value(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(boxed.value(&[1.5]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn partition_mismatch_is_structural() {
        let gl = Regularizer::GroupLasso { lambda: 1.0, partition: one_group(3) };
        assert!(matches!(gl.value(&[1.0, 2.0]), Err(Error::Structural(_))));
        assert!(matches!(gl.prox(&[1.0, 2.0], 1.0), Err(Error::Structural(_))));
    }

    #[test]
    fn prox_examples() {
        let l1 = Regularizer::L1 { lambda: 1.0 };
        assert_eq!(l1.prox(&[3.0, -1.0, 0.5], 1.0).unwrap(), vec![2.0, 0.0, 0.0]);

        let gl = Regularizer::GroupLasso { lambda: 1.0, partition: one_group(2) };
        let u = gl.prox(&[3.0, 4.0], 1.0).unwrap();
        assert!((u[0] - 2.4).abs() < 1e-15 && (u[1] - 3.2).abs() < 1e-15);

        let gm = Regularizer::GroupMcp { lambda: 1.0, omega: 2.0, partition: one_group(2) };
        let u = gm.prox(&[1.0, 0.0], 0.5).unwrap();
        assert!((u[0] - 2.0 / 3.0).abs() < 1e-15 && u[1] == 0.0);
        assert_eq!(gm.prox(&[3.0, 0.0], 0.5).unwrap(), vec![3.0, 0.0]);

        let boxed = Regularizer::BoxIndicator { lo: 0.0, hi: 1.0 };
        assert_eq!(boxed.prox(&[-0.2, 0.5, 3.0], 1.0).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn ungrouped_coordinates_pass_through() {
        let p = GroupPartition::new(3, vec![vec![0, 1]], vec![1.0]).unwrap();
        let gl = Regularizer::GroupLasso { lambda: 10.0, partition: p.clone() };
        assert_eq!(gl.prox(&[1.0, 1.0, 7.0], 1.0).unwrap(), vec![0.0, 0.0, 7.0]);
        let sgl = Regularizer::SparseGroupLasso { lambda_l1: 10.0, lambda_group: 0.0, partition: p };
        assert_eq!(sgl.prox(&[1.0, 1.0, 7.0], 1.0).unwrap(), vec![0.0, 0.0, 7.0]);
    }

    #[test]
    fn mcp_step_too_large_is_rejected() {
        let gm = Regularizer::GroupMcp { lambda: 1.0, omega: 2.0, partition: one_group(2) };
        let mut v = vec![1.0, 0.0];
        assert!(matches!(gm.prox_in_place(&mut v, 2.0), Err(Error::Parameter(_))));
        assert_eq!(v, vec![1.0, 0.0]);
        assert!(gm.prox(&[1.0, 0.0], 1.999).is_ok());
    }

    #[test]
    fn nan_input_is_rejected() {
        assert!(matches!(Regularizer::None.prox(&[f64::NAN], 1.0), Err(Error::Input(_))));
        assert!(Regularizer::L1 { lambda: 1.0 }.prox(&[1.0], 0.0).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(Regularizer::L1 { lambda: -1.0 }.validate().is_err());
        let p = one_group(2);
        assert!(Regularizer::GroupMcp { lambda: 1.0, omega: 1.0, partition: p }.validate().is_err());
        assert!(Regularizer::BoxIndicator { lo: 1.0, hi: 0.0 }.validate().is_err());
    }

    #[test]
    fn zero_patterns() {
        let p = GroupPartition::new(4, vec![vec![0, 1], vec![2, 3]], vec![1.0, 1.0]).unwrap();
        assert_eq!(zero_pattern(&[0.0, 0.0, 1.0, 0.0], &p).unwrap(), vec![true, false]);
        assert_eq!(zero_pattern(&[0.0; 4], &p).unwrap(), vec![true, true]);
        assert_eq!(zero_pattern(&[1.0, 2.0, 3.0, 4.0], &p).unwrap(), vec![false, false]);
        assert_eq!(zero_pattern(&[-0.0; 4], &p).unwrap(), vec![true, true]);
    }

    #[test]
    fn group_zero_iff_norm_below_threshold() {
        let gl = Regularizer::GroupLasso { lambda: 5.0, partition: one_group(2) };
        // ||(3, 4)|| = 5 is exactly the threshold
        assert_eq!(gl.prox(&[3.0, 4.0], 1.0).unwrap(), vec![0.0, 0.0]);
        assert!(gl.prox(&[3.0, 4.000001], 1.0).unwrap().iter().all(|x| *x != 0.0));
    }
}
