//! Adam with bias correction, warmup-cosine learning-rate schedule,
//! gradient clipping and plateau-based early stopping.

use serde::{Deserialize, Serialize};

use super::{clip_gradient, LossAndGrad};
use crate::net::ParamVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr_max: f64,
    pub warmup_iters: usize,
    pub max_iters: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    /// Trailing window over which loss variation is monitored.
    pub plateau_window: usize,
    /// Relative variation threshold that ends the stage.
    pub plateau_tol: f64,
}

impl AdamConfig {
    /// Defaults with warmup set to 5% of the iteration budget.
    pub fn with_iters(max_iters: usize) -> Self {
        AdamConfig {
            lr_max: 1e-3,
            warmup_iters: max_iters / 20,
            max_iters,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            plateau_window: 500,
            plateau_tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Ok(()); // zero-budget runs are legal no-ops
        }
        if self.warmup_iters >= self.max_iters {
            return Err(Error::InvalidInput(format!(
                "warmup_iters ({}) must be below max_iters ({})",
                self.warmup_iters, self.max_iters
            )));
        }
        if self.plateau_window < 2 {
            return Err(Error::InvalidInput("plateau_window must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput("beta1/beta2 must lie in (0, 1)".into()));
        }
        if self.lr_max <= 0.0 || self.epsilon <= 0.0 || self.clip_norm <= 0.0 {
            return Err(Error::InvalidInput(
                "lr_max, epsilon and clip_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_iters(2000)
    }
}

/// Learning rate at `iter`: linear ramp from 0 to `lr_max` across the
/// warmup, then a cosine half-wave decay to 0 at `max_iters`.
pub fn lr_schedule(iter: usize, cfg: &AdamConfig) -> f64 {
    debug_assert!(iter < cfg.max_iters);
    if iter < cfg.warmup_iters {
        cfg.lr_max * iter as f64 / cfg.warmup_iters as f64
    } else {
        let span = (cfg.max_iters - cfg.warmup_iters) as f64;
        let t = (iter - cfg.warmup_iters) as f64 / span;
        cfg.lr_max * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdamStop {
    MaxIters,
    Plateau,
    ZeroBudget,
}

#[derive(Debug, Clone)]
pub struct AdamOutcome {
    pub params: ParamVector,
    /// One entry per iteration, in evaluation order.
    pub loss_history: Vec<f64>,
    pub stop: AdamStop,
}

/// Run the Adam stage. The stage ends at `max_iters` or as soon as the
/// relative variation of the loss over the trailing `plateau_window`
/// iterations falls below `plateau_tol`.
pub fn adam_run<F: LossAndGrad>(
    mut loss_and_grad: F,
    params0: &ParamVector,
    cfg: &AdamConfig,
) -> Result<AdamOutcome> {
    cfg.validate()?;
    let mut params = params0.clone();
    let mut history: Vec<f64> = Vec::new();
    if cfg.max_iters == 0 {
        return Ok(AdamOutcome { params, loss_history: history, stop: AdamStop::ZeroBudget });
    }

    let n = params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut stop = AdamStop::MaxIters;

    for iter in 0..cfg.max_iters {
        let (loss, grad) = loss_and_grad(&params)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite { stage: "adam", iteration: iter });
        }
        history.push(loss);

        if history.len() >= cfg.plateau_window {
            let window = &history[history.len() - cfg.plateau_window..];
            let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            if (hi - lo) / mean.abs().max(1e-12) < cfg.plateau_tol {
                stop = AdamStop::Plateau;
                break;
            }
        }

        let clipped = clip_gradient(&grad, cfg.clip_norm);
        let lr = lr_schedule(iter, cfg);
        let t = (iter + 1) as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..n {
            let g = clipped.values[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params.values[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }

    Ok(AdamOutcome { params, loss_history: history, stop })
}
