//! Synthetic benchmark generators with known ground truth.
//!
//! The experimental datasets behind the real flame cases are not
//! distributable, so desk-scale validation runs on two stand-ins: the
//! classic one-dimensional multi-fidelity benchmark pair, and a synthetic
//! flame-trace generator whose low-fidelity trend, fidelity gap and noise
//! level are all known exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dataset::{CaseCondition, FlameSample, FlameTrace};
use crate::lofi::{CondKey, TrendKind, TrendModel};
use crate::{Error, Result};

/// The standard one-dimensional multi-fidelity test pair on [0, 1]:
/// `y_hf = (6x-2)^2 sin(12x-4)`, `y_lf = 0.5 y_hf + 10(x-0.5) - 5`.
/// Their gap is affine in x, so a linear correction alone can close it.
pub fn forrester_pair(x: f64) -> (f64, f64) {
    let y_hf = (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin();
    let y_lf = 0.5 * y_hf + 10.0 * (x - 0.5) - 5.0;
    (y_lf, y_hf)
}

/// Smooth nonlinear fidelity gap applied in log space:
/// `g(t, u') = amplitude · sin(u_freq · u') · ln t`.
///
/// The default full-period sine over the turbulence range sits well
/// outside the quadratic coefficient-surface span, so the nonlinear
/// correction branch has real work to do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub amplitude: f64,
    pub u_freq: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation { amplitude: 0.1, u_freq: 2.0 * std::f64::consts::PI }
    }
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation { amplitude: 0.0, u_freq: 1.0 }
    }

    pub fn eval(&self, t: f64, u_prime: f64) -> f64 {
        self.amplitude * (self.u_freq * u_prime).sin() * t.ln()
    }
}

/// Recipe for one synthetic flame case.
#[derive(Debug, Clone)]
pub struct SyntheticFlameSpec {
    /// Ground-truth low-fidelity trend (the structured part).
    pub trend: TrendModel,
    pub perturbation: Perturbation,
    /// Relative noise level (standard deviation in log space).
    pub noise_std: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl SyntheticFlameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < 0.0 {
            return Err(Error::InvalidInput("noise_std must be non-negative".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("at least one replicate".into()));
        }
        Ok(())
    }
}

/// Noise-free ground truth retained next to the generated traces so
/// recovery errors can be measured exactly.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub trend: TrendModel,
    pub perturbation: Perturbation,
}

impl GroundTruth {
    /// High-fidelity truth: trend with the fidelity gap applied.
    pub fn hifi(&self, t: f64, condition: &CaseCondition) -> Result<f64> {
        let cond = CondKey {
            temperature_k: condition.temperature_k,
            pressure_mpa: condition.pressure_mpa,
        };
        match &self.trend.kind {
            TrendKind::HierarchicalLogQuad { .. } => {
                let lofi = self
                    .trend
                    .eval_hierarchical(t, condition.u_prime_mps, condition.phi, &cond)?;
                Ok((lofi.ln() + self.perturbation.eval(t, condition.u_prime_mps)).exp())
            }
            TrendKind::PressureLinear { .. } => {
                self.trend.eval_pressure(t, condition.pressure_mpa)
            }
            TrendKind::RadialLinear { .. } => Err(Error::InvalidInput(
                "radial trends are not time-parameterized; generate over r instead".into(),
            )),
        }
    }

    /// Low-fidelity truth: the trend alone.
    pub fn lofi(&self, t: f64, condition: &CaseCondition) -> Result<f64> {
        let cond = CondKey {
            temperature_k: condition.temperature_k,
            pressure_mpa: condition.pressure_mpa,
        };
        match &self.trend.kind {
            TrendKind::HierarchicalLogQuad { .. } => {
                self.trend
                    .eval_hierarchical(t, condition.u_prime_mps, condition.phi, &cond)
            }
            TrendKind::PressureLinear { .. } => {
                self.trend.eval_pressure(t, condition.pressure_mpa)
            }
            TrendKind::RadialLinear { .. } => Err(Error::InvalidInput(
                "radial trends are not time-parameterized".into(),
            )),
        }
    }
}

/// Wrinkling ratio used for the companion radius column of generated
/// area traces; any constant > 1 keeps the traces physically plausible.
const COMPANION_WRINKLING: f64 = 1.5;

/// Generate noisy high-fidelity flame traces plus their exact ground
/// truth. Deterministic for a fixed seed: conditions and replicates are
/// consumed in order from one seeded stream.
///
/// For log-quadratic trends the target is the surface area (noise and
/// fidelity gap act in log space) and the radius column is the companion
/// smooth-sphere radius at a fixed wrinkling ratio. For pressure-linear
/// trends the target is the radius itself with relative noise, and the
/// area column is the matching smooth-sphere area.
pub fn generate_flame_case(
    spec: &SyntheticFlameSpec,
    conditions: &[CaseCondition],
    time_grid: &[f64],
) -> Result<(Vec<FlameTrace>, GroundTruth)> {
    spec.validate()?;
    if time_grid.is_empty() {
        return Err(Error::InsufficientData("empty time grid".into()));
    }
    let truth = GroundTruth { trend: spec.trend.clone(), perturbation: spec.perturbation };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = rand_distr::Normal::new(0.0, 1.0).map_err(|e| {
        Error::InvalidInput(format!("noise distribution: {e}"))
    })?;

    let mut traces = Vec::with_capacity(conditions.len() * spec.replicates);
    for condition in conditions {
        for rep in 0..spec.replicates {
            let mut samples = Vec::with_capacity(time_grid.len());
            for &t in time_grid {
                let eps = if spec.noise_std > 0.0 {
                    spec.noise_std * normal.sample(&mut rng)
                } else {
                    // Keep the stream position fixed so noise_std = 0 is
                    // the exact limit of the noisy generator.
                    0.0
                };
                let (a3d, r3d) = match &spec.trend.kind {
                    TrendKind::PressureLinear { .. } => {
                        let r = truth.hifi(t, condition)? * (1.0 + eps);
                        (4.0 * std::f64::consts::PI * r * r, r)
                    }
                    _ => {
                        let a = (truth.hifi(t, condition)?.ln() + eps).exp();
                        let r = (a / (4.0 * std::f64::consts::PI * COMPANION_WRINKLING)).sqrt();
                        (a, r)
                    }
                };
                samples.push(FlameSample { t_s: t, a3d_m2: a3d, r3d_m: r3d });
            }
            traces.push(FlameTrace::new(condition.clone(), rep as u32, samples)?);
        }
    }
    Ok((traces, truth))
}

/// Root-mean-square deviation between two equal-length series.
pub fn evaluate_rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}
