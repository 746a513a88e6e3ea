//! Limited-memory BFGS with the two-loop recursion and a strong-Wolfe
//! line search (Nocedal & Wright, Algorithms 3.5/3.6 with bisection zoom).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::LossAndGrad;
use crate::linalg::{dot, norm_inf};
use crate::net::ParamVector;
use crate::{Error, Result};

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_EXPANSIONS: usize = 30;
const MAX_ZOOM: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    StrongWolfe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub history_size: usize,
    /// Termination threshold on the infinity norm of the gradient.
    pub grad_tol: f64,
    pub line_search: LineSearch,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 500,
            history_size: 20,
            grad_tol: 1e-8,
            line_search: LineSearch::StrongWolfe,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_size == 0 {
            return Err(Error::InvalidInput("history_size must be at least 1".into()));
        }
        if self.grad_tol <= 0.0 {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    /// Gradient dropped below `grad_tol`.
    Converged,
    MaxIters,
    /// Line search could not satisfy the Wolfe conditions; the best
    /// iterate seen so far is returned instead of failing.
    LineSearchFailed,
    ZeroBudget,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub params: ParamVector,
    pub loss: f64,
    pub status: LbfgsStatus,
    /// Accepted iterations (line-search probes not counted).
    pub iterations: usize,
    /// Loss at each accepted iterate.
    pub loss_history: Vec<f64>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns the search direction `-H g`.
fn two_loop(grad: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for (pair, a) in history.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    for qi in &mut q {
        *qi = -*qi;
    }
    q
}

struct Probe {
    phi: f64,
    dphi: f64,
    params: ParamVector,
    grad: ParamVector,
}

/// Evaluate the objective along `x + alpha d`. Non-finite losses are
/// mapped to +inf so the line search backs off instead of crashing.
fn probe<F: LossAndGrad>(
    f: &mut F,
    x: &ParamVector,
    d: &[f64],
    alpha: f64,
) -> Result<Probe> {
    let mut p = x.clone();
    for (pi, di) in p.values.iter_mut().zip(d) {
        *pi += alpha * di;
    }
    let (loss, grad) = f(&p)?;
    if !loss.is_finite() || !grad.is_finite() {
        return Ok(Probe { phi: f64::INFINITY, dphi: f64::INFINITY, params: p, grad });
    }
    let dphi = dot(&grad.values, d);
    Ok(Probe { phi: loss, dphi, params: p, grad })
}

enum SearchResult {
    Accepted(Probe),
    Failed,
}

/// Strong-Wolfe line search: bracketing phase with doubling steps, then a
/// bisection zoom.
fn strong_wolfe<F: LossAndGrad>(
    f: &mut F,
    x: &ParamVector,
    d: &[f64],
    phi0: f64,
    dphi0: f64,
) -> Result<SearchResult> {
    let zoom = |f: &mut F,
                mut a_lo: f64,
                mut phi_lo: f64,
                mut a_hi: f64|
     -> Result<SearchResult> {
        for _ in 0..MAX_ZOOM {
            let a = 0.5 * (a_lo + a_hi);
            let p = probe(f, x, d, a)?;
            if p.phi > phi0 + WOLFE_C1 * a * dphi0 || p.phi >= phi_lo {
                a_hi = a;
            } else {
                if p.dphi.abs() <= -WOLFE_C2 * dphi0 {
                    return Ok(SearchResult::Accepted(p));
                }
                if p.dphi * (a_hi - a_lo) >= 0.0 {
                    a_hi = a_lo;
                }
                a_lo = a;
                phi_lo = p.phi;
            }
            if (a_hi - a_lo).abs() <= 1e-16 * a_lo.abs().max(1.0) {
                break;
            }
        }
        Ok(SearchResult::Failed)
    };

    let mut a_prev = 0.0;
    let mut phi_prev = phi0;
    let mut alpha = 1.0;
    for i in 0..MAX_EXPANSIONS {
        let p = probe(f, x, d, alpha)?;
        if p.phi > phi0 + WOLFE_C1 * alpha * dphi0 || (i > 0 && p.phi >= phi_prev) {
            return zoom(f, a_prev, phi_prev, alpha);
        }
        if p.dphi.abs() <= -WOLFE_C2 * dphi0 {
            return Ok(SearchResult::Accepted(p));
        }
        if p.dphi >= 0.0 {
            return zoom(f, alpha, p.phi, a_prev);
        }
        a_prev = alpha;
        phi_prev = p.phi;
        alpha *= 2.0;
    }
    Ok(SearchResult::Failed)
}

/// Run the L-BFGS stage. Terminates when the infinity norm of the
/// gradient drops below `grad_tol` or the iteration budget is exhausted.
/// A failed line search returns the best iterate seen so far with
/// [`LbfgsStatus::LineSearchFailed`] rather than an error.
pub fn lbfgs_run<F: LossAndGrad>(
    mut loss_and_grad: F,
    params0: &ParamVector,
    cfg: &LbfgsConfig,
) -> Result<LbfgsOutcome> {
    cfg.validate()?;
    let (f0, g0) = loss_and_grad(params0)?;
    if !f0.is_finite() || !g0.is_finite() {
        return Err(Error::NonFinite { stage: "lbfgs", iteration: 0 });
    }
    if cfg.max_iters == 0 {
        return Ok(LbfgsOutcome {
            params: params0.clone(),
            loss: f0,
            status: LbfgsStatus::ZeroBudget,
            iterations: 0,
            loss_history: Vec::new(),
        });
    }
    if norm_inf(&g0.values) < cfg.grad_tol {
        return Ok(LbfgsOutcome {
            params: params0.clone(),
            loss: f0,
            status: LbfgsStatus::Converged,
            iterations: 0,
            loss_history: Vec::new(),
        });
    }

    let mut x = params0.clone();
    let mut fx = f0;
    let mut g = g0;
    // The best-so-far iterate starts at the input point, so the stage can
    // never hand back something worse than it received.
    let mut best_params = x.clone();
    let mut best_loss = fx;
    let mut history: VecDeque<Pair> = VecDeque::new();
    let mut loss_history = Vec::new();
    let mut status = LbfgsStatus::MaxIters;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let mut d = two_loop(&g.values, &history);
        let mut dphi0 = dot(&g.values, &d);
        if dphi0 >= 0.0 {
            // Curvature history produced a non-descent direction; restart
            // from steepest descent.
            history.clear();
            d = g.values.iter().map(|v| -v).collect();
            dphi0 = dot(&g.values, &d);
            if dphi0 >= 0.0 {
                status = LbfgsStatus::Converged;
                break;
            }
        }

        match strong_wolfe(&mut loss_and_grad, &x, &d, fx, dphi0)? {
            SearchResult::Failed => {
                status = LbfgsStatus::LineSearchFailed;
                break;
            }
            SearchResult::Accepted(p) => {
                let s: Vec<f64> = p.params.values.iter().zip(&x.values).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = p.grad.values.iter().zip(&g.values).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * crate::linalg::norm2(&s) * crate::linalg::norm2(&y) {
                    if history.len() == cfg.history_size {
                        history.pop_front();
                    }
                    history.push_back(Pair { rho: 1.0 / sy, s, y });
                }
                x = p.params;
                fx = p.phi;
                g = p.grad;
                iterations += 1;
                loss_history.push(fx);
                if fx < best_loss {
                    best_loss = fx;
                    best_params = x.clone();
                }
                if norm_inf(&g.values) < cfg.grad_tol {
                    status = LbfgsStatus::Converged;
                    break;
                }
            }
        }
    }

    Ok(LbfgsOutcome {
        params: best_params,
        loss: best_loss,
        status,
        iterations,
        loss_history,
    })
}
