//! RMDA (regularized dual averaging with momentum) and baselines.
//!
//! Optimizers never see data: the caller evaluates the stochastic gradient at
//! the current iterate [`RmdaState::w`] / [`MsgdState::w`] and passes it in
//! together with the global epoch index used by the schedules.

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::regularizers::Regularizer;
use crate::schedule::{beta, CompensatedSum, Schedule};

fn check_grad(grad: &[f64], dim: usize) -> Result<()> {
    if grad.len() != dim {
        return Err(Error::structural(format!("gradient of length {} for dimension {dim}", grad.len())));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Input(format!("non-finite gradient entry at index {i}")));
    }
    Ok(())
}

fn momentum_value(c: &Schedule, epoch: u64) -> Result<f64> {
    let value = c.value(epoch);
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidSchedule(format!("momentum c({epoch}) = {value} is outside [0, 1]")));
    }
    Ok(value)
}

fn learning_rate(eta: &Schedule, epoch: u64) -> Result<f64> {
    let value = eta.value(epoch);
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidSchedule(format!("learning rate eta({epoch}) = {value} is not positive")));
    }
    Ok(value)
}

/// Running quantities of one RMDA round. A step that returns an error
/// leaves the state unchanged.
#[derive(Debug, Clone)]
pub struct RmdaState {
    w: ParamVector,
    w_tilde: ParamVector,
    prev_w: Vec<f64>,
    v: Vec<f64>,
    alpha: CompensatedSum,
    t: u64,
    w0: ParamVector,
    reg: Regularizer,
    eta: Schedule,
    c: Schedule,
}

impl RmdaState {
    pub fn new(w0: ParamVector, reg: Regularizer, eta: Schedule, c: Schedule) -> Result<Self> {
        reg.validate()?;
        if let Some(p) = reg.partition() {
            p.check_dim(w0.dim())?;
        }
        eta.validate()?;
        c.validate()?;
        Ok(Self {
            w: w0.clone(),
            w_tilde: w0.clone(),
            prev_w: w0.values().to_vec(),
            v: vec![0.0; w0.dim()],
            alpha: CompensatedSum::default(),
            t: 0,
            w0,
            reg,
            eta,
            c,
        })
    }

    /// Current iterate `W^t`.
    pub fn w(&self) -> &ParamVector {
        &self.w
    }

    /// Tentative iterate `W~^t` (the proximal point).
    pub fn w_tilde(&self) -> &ParamVector {
        &self.w_tilde
    }

    /// `W^{t-1}`: the iterate the latest gradient was evaluated at.
    pub fn prev_w(&self) -> &[f64] {
        &self.prev_w
    }

    /// Round anchor `W^0`.
    pub fn w0(&self) -> &ParamVector {
        &self.w0
    }

    /// Weighted gradient sum `V^t`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    /// Steps taken in the current round.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn eta(&self) -> &Schedule {
        &self.eta
    }

    pub fn momentum(&self) -> &Schedule {
        &self.c
    }

    /// One RMDA step with `c = c(epoch)`.
    pub fn step(&mut self, grad: &[f64], epoch: u64) -> Result<()> {
        let c = momentum_value(&self.c, epoch)?;
        self.step_with_momentum(grad, epoch, c)
    }

    /// Classical RDA step: the RMDA step with `c` forced to 1.
    pub fn rda_step(&mut self, grad: &[f64], epoch: u64) -> Result<()> {
        self.step_with_momentum(grad, epoch, 1.0)
    }

    fn step_with_momentum(&mut self, grad: &[f64], epoch: u64, c: f64) -> Result<()> {
        check_grad(grad, self.w.dim())?;
        let lr = learning_rate(&self.eta, epoch)?;
        let t = self.t + 1;
        let beta = beta(t);
        let s = lr * beta;
        let mut alpha = self.alpha;
        alpha.add(s);
        if !(s.is_finite() && alpha.value().is_finite()) {
            return Err(Error::Numeric(format!("dual-averaging weight overflowed at step {t}")));
        }
        let tau = alpha.value() / beta;
        self.reg.check_step(tau)?;

        let v: Vec<f64> = self.v.iter().zip(grad).map(|(v, g)| v + s * g).collect();
        let mut tilde: Vec<f64> = self.w0.values().iter().zip(&v).map(|(w0, v)| w0 - v / beta).collect();
        if tilde.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("dual average became non-finite at step {t}")));
        }
        self.reg.prox_in_place(&mut tilde, tau)?;
        let w: Vec<f64> = self.w.values().iter().zip(&tilde).map(|(w, wt)| (1.0 - c) * w + c * wt).collect();
        if let Some(i) = w.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("iterate became non-finite at index {i} (step {t})")));
        }

        self.t = t;
        self.alpha = alpha;
        self.v = v;
        self.prev_w.copy_from_slice(self.w.values());
        self.w_tilde.values_mut().copy_from_slice(&tilde);
        self.w.values_mut().copy_from_slice(&w);
        Ok(())
    }

    /// Starts a new round from the current iterate: `W^0 <- W`, `V <- 0`,
    /// `alpha <- 0`, `t <- 0`. Schedules keep their global epoch clock.
    pub fn restart(&mut self) {
        self.w0 = self.w.clone();
        self.w_tilde = self.w.clone();
        self.prev_w.copy_from_slice(self.w.values());
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.alpha = CompensatedSum::default();
        self.t = 0;
    }

    /// Replaces the regularizer, e.g. to change weights between rounds.
    pub fn set_regularizer(&mut self, reg: Regularizer) -> Result<()> {
        reg.validate()?;
        if let Some(p) = reg.partition() {
            p.check_dim(self.w.dim())?;
        }
        self.reg = reg;
        Ok(())
    }
}

/// Heavy-ball momentum SGD with an optional proximal step (proxMSGD); with
/// [`Regularizer::None`] it is plain momentum SGD.
#[derive(Debug, Clone)]
pub struct MsgdState {
    w: ParamVector,
    m: Vec<f64>,
    mu: f64,
    eta: Schedule,
    reg: Regularizer,
}

impl MsgdState {
    pub fn new(w: ParamVector, mu: f64, eta: Schedule, reg: Regularizer) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::parameter(format!("momentum mu must lie in [0, 1), got {mu}")));
        }
        reg.validate()?;
        if let Some(p) = reg.partition() {
            p.check_dim(w.dim())?;
        }
        eta.validate()?;
        let m = vec![0.0; w.dim()];
        Ok(Self { w, m, mu, eta, reg })
    }

    pub fn w(&self) -> &ParamVector {
        &self.w
    }

    pub fn momentum_buffer(&self) -> &[f64] {
        &self.m
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn eta(&self) -> &Schedule {
        &self.eta
    }

    /// `m <- mu m + g`, `W <- prox_{eta psi}(W - eta m)`.
    pub fn step(&mut self, grad: &[f64], epoch: u64) -> Result<()> {
        check_grad(grad, self.w.dim())?;
        let lr = learning_rate(&self.eta, epoch)?;
        self.reg.check_step(lr)?;
        let m: Vec<f64> = self.m.iter().zip(grad).map(|(m, g)| self.mu * m + g).collect();
        let mut w: Vec<f64> = self.w.values().iter().zip(&m).map(|(w, m)| w - lr * m).collect();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("iterate became non-finite".into()));
        }
        self.reg.prox_in_place(&mut w, lr)?;
        self.m = m;
        self.w.values_mut().copy_from_slice(&w);
        Ok(())
    }
}
