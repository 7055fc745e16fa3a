//! Learning-rate and momentum schedules, the `beta_t = sqrt(t)` scaling, and
//! a finite-horizon checker for the step-size conditions that drive
//! variance reduction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pure function of a non-negative index (an epoch in training, a step
/// count inside the checker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// `base * factor^floor(index / period)`, clamped from below by `limit`
    /// when decaying (`factor < 1`) and from above when growing.
    MultiStep {
        base: f64,
        factor: f64,
        period: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<f64>,
    },
    /// Piecewise constant: `[start, value]` pairs with increasing starts; the
    /// first start must be 0.
    Table {
        steps: Vec<(u64, f64)>,
    },
    /// `base * index^exponent`.
    Power {
        base: f64,
        exponent: f64,
    },
    /// `base * exp(rate * index)`.
    Exponential {
        base: f64,
        rate: f64,
    },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn multi_step(base: f64, factor: f64, period: u64, limit: Option<f64>) -> Self {
        Schedule::MultiStep { base, factor, period, limit }
    }

    pub fn value(&self, index: u64) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::MultiStep { base, factor, period, limit } => {
                let k = (index / (*period).max(1)).min(i32::MAX as u64) as i32;
                let v = base * factor.powi(k);
                match limit {
                    Some(l) if *factor < 1.0 => v.max(*l),
                    Some(l) => v.min(*l),
                    None => v,
                }
            }
            Schedule::Table { steps } => {
                let pos = steps.partition_point(|&(start, _)| start <= index);
                steps[pos.saturating_sub(1)].1
            }
            Schedule::Power { base, exponent } => base * (index as f64).powf(*exponent),
            Schedule::Exponential { base, rate } => base * (rate * index as f64).exp(),
        }
    }

    /// Structural checks that do not depend on the evaluation range.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        match self {
            Schedule::Constant { value } if !value.is_finite() => bad(format!("constant {value}")),
            Schedule::MultiStep { period: 0, .. } => bad("multi-step period must be positive".into()),
            Schedule::MultiStep { base, factor, limit, .. }
                if !(base.is_finite() && factor.is_finite() && *factor > 0.0)
                    || limit.is_some_and(|l| !l.is_finite()) =>
            {
                bad(format!("multi-step base {base}, factor {factor}, limit {limit:?}"))
            }
            Schedule::Table { steps } if steps.first().map(|s| s.0) != Some(0) => {
                bad("table must start at index 0".into())
            }
            Schedule::Table { steps } if steps.windows(2).any(|w| w[0].0 >= w[1].0) => {
                bad("table starts must be strictly increasing".into())
            }
            _ => Ok(()),
        }
    }

    /// Checks `value(i) > 0` for every `i` in `range`.
    pub fn check_positive(&self, range: std::ops::Range<u64>) -> Result<()> {
        self.validate()?;
        for i in range {
            let v = self.value(i);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSchedule(format!("value {v} at index {i} is not positive")));
            }
        }
        Ok(())
    }

    /// Checks `value(i)` lies in `[0, 1]` for every `i` in `range`.
    pub fn check_unit_interval(&self, range: std::ops::Range<u64>) -> Result<()> {
        self.validate()?;
        for i in range {
            let v = self.value(i);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSchedule(format!("value {v} at index {i} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `beta_t = sqrt(t)` for step `t >= 1`.
///
/// Panics on `t == 0`.
pub fn beta(t: u64) -> f64 {
    assert!(t >= 1, "beta is defined for t >= 1");
    (t as f64).sqrt()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Outcome of [`validate_schedule`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub horizon: u64,
    pub sum_tau: f64,
    /// Share of `sum tau_t` contributed by the second half of the horizon.
    pub tau_tail_share: f64,
    pub sum_tau_sq: f64,
    /// Share of `sum tau_t^2` contributed by the second half of the horizon.
    pub tau_sq_tail_share: f64,
    /// `sum tau^2` over `(H/2, H]` divided by the sum over `(H/4, H/2]`.
    pub tau_sq_decay: f64,
    pub tau_mid: f64,
    pub tau_final: f64,
    /// (a) partial sums of tau still growing at the horizon.
    pub diverging: bool,
    /// (b) partial sums of tau^2 have levelled off.
    pub square_summable: bool,
    /// (c) tau is non-increasing over the tail and clearly shrinking.
    pub vanishing: bool,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.diverging && self.square_summable && self.vanishing
    }
}

/// Minimum share of `sum tau` the tail half must add for the series to count
/// as diverging.
pub const DIVERGENCE_TAIL_SHARE: f64 = 0.01;
/// Maximum share of `sum tau^2` the tail half may add for the series to count
/// as converging.
pub const CONVERGENCE_TAIL_SHARE: f64 = 0.10;
/// Maximum `tau_sq_decay`; `tau_t ~ t^-p` gives `2^(1 - 2p)`, so this
/// accepts decay at least as fast as `t^-0.71`.
pub const SQUARE_DECAY_RATIO: f64 = 0.75;
/// `tau_H / tau_{H/2}` must not exceed this for tau to count as vanishing.
pub const VANISHING_RATIO: f64 = 0.75;

/// Finite-horizon proxies for the step-size conditions
/// `sum tau_t = inf`, `sum tau_t^2 < inf`, `tau_t -> 0`, where
/// `s_t = eta(t) beta_t`, `alpha_t = sum_{k<=t} s_k` and
/// `tau_t = s_t / alpha_t`.
///
/// `eta` is indexed by step `t >= 1`.
pub fn validate_schedule(eta: impl Fn(u64) -> f64, horizon: u64) -> Result<ScheduleReport> {
    if horizon < 1000 {
        return Err(Error::parameter(format!("horizon {horizon} is below the minimum of 1000")));
    }
    let mid = horizon / 2;
    let mut alpha = CompensatedSum::default();
    let mut sum_tau = CompensatedSum::default();
    let mut sum_tau_sq = CompensatedSum::default();
    let quarter = horizon / 4;
    let (mut head_tau, mut head_tau_sq, mut quarter_tau_sq) = (0.0, 0.0, 0.0);
    let mut tau_mid = 0.0;
    let mut prev_tau = f64::INFINITY;
    let mut partial_sums_growing = true;
    let mut monotone_tail = true;
    let mut tau = 0.0;

    for t in 1..=horizon {
        let lr = eta(t);
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidSchedule(format!("eta({t}) = {lr} is not positive")));
        }
        let s = lr * beta(t);
        alpha.add(s);
        tau = s / alpha.value();
        let before = sum_tau.value();
        sum_tau.add(tau);
        sum_tau_sq.add(tau * tau);
        if t > mid {
            partial_sums_growing &= sum_tau.value() > before;
            monotone_tail &= tau <= prev_tau * (1.0 + 1e-12);
        }
        if t == quarter {
            quarter_tau_sq = sum_tau_sq.value();
        }
        if t == mid {
            head_tau = sum_tau.value();
            head_tau_sq = sum_tau_sq.value();
            tau_mid = tau;
        }
        prev_tau = tau;
    }

    let total = sum_tau.value();
    let total_sq = sum_tau_sq.value();
    let tau_tail_share = (total - head_tau) / total;
    let tau_sq_tail_share = (total_sq - head_tau_sq) / total_sq;
    let tau_sq_decay = (total_sq - head_tau_sq) / (head_tau_sq - quarter_tau_sq);
    Ok(ScheduleReport {
        horizon,
        sum_tau: total,
        tau_tail_share,
        sum_tau_sq: total_sq,
        tau_sq_tail_share,
        tau_sq_decay,
        tau_mid,
        tau_final: tau,
        diverging: partial_sums_growing && tau_tail_share >= DIVERGENCE_TAIL_SHARE,
        square_summable: tau_sq_tail_share < CONVERGENCE_TAIL_SHARE && tau_sq_decay <= SQUARE_DECAY_RATIO,
        vanishing: monotone_tail && tau <= VANISHING_RATIO * tau_mid,
    })
}
