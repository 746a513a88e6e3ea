//! Pressure-trace measurement pipeline.
//!
//! Raw chamber-pressure signals are smoothed with a Savitzky-Golay filter,
//! downsampled, truncated at peak pressure, and differentiated. The
//! closed-form fractional burning-rate thermodynamics then yield the
//! turbulent mass burning velocity and the corresponding flame radius,
//! which are re-parameterized as `u_tm(r)` and smoothed once more to form
//! the final high-fidelity target curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, DesignMatrix};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Thermodynamic metadata carried alongside the pressure samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    /// Initial pressure, MPa.
    pub p0_mpa: f64,
    /// Peak pressure, MPa. Derived from the data at truncation unless
    /// overridden.
    pub pf_mpa: f64,
    /// Specific heat ratio of the unburned gas.
    pub gamma_u: f64,
    /// Combustion chamber radius, m.
    pub r0_m: f64,
}

impl TraceMeta {
    pub fn validate(&self) -> Result<()> {
        if self.p0_mpa >= self.pf_mpa {
            return Err(Error::InvalidInput(format!(
                "initial pressure {} MPa must be below peak {} MPa",
                self.p0_mpa, self.pf_mpa
            )));
        }
        if self.gamma_u <= 1.0 {
            return Err(Error::InvalidInput("gamma_u must exceed 1".into()));
        }
        if self.r0_m <= 0.0 {
            return Err(Error::InvalidInput("chamber radius must be positive".into()));
        }
        Ok(())
    }
}

/// Chamber pressure versus time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureTrace {
    /// Seconds, strictly increasing.
    pub t: Vec<f64>,
    /// MPa.
    pub p: Vec<f64>,
    pub meta: TraceMeta,
}

impl PressureTrace {
    pub fn new(t: Vec<f64>, p: Vec<f64>, meta: TraceMeta) -> Result<Self> {
        if t.len() != p.len() {
            return Err(Error::Dimension(format!(
                "{} timestamps vs {} pressures",
                t.len(),
                p.len()
            )));
        }
        if t.is_empty() {
            return Err(Error::InsufficientData("empty pressure trace".into()));
        }
        for w in t.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pressure sample".into()));
        }
        meta.validate()?;
        Ok(PressureTrace { t, p, meta })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveProvenance {
    Raw,
    Smoothed,
}

impl std::fmt::Display for CurveProvenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveProvenance::Raw => write!(f, "raw"),
            CurveProvenance::Smoothed => write!(f, "smoothed"),
        }
    }
}

/// Burning velocity as a function of flame radius, sorted ascending in r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurningCurve {
    pub r: Vec<f64>,
    pub u_tm: Vec<f64>,
    pub provenance: CurveProvenance,
}

impl BurningCurve {
    /// CSV with header `r_m,u_tm_mps,provenance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_m,u_tm_mps,provenance\n");
        for (r, u) in self.r.iter().zip(&self.u_tm) {
            let _ = writeln!(out, "{r},{u},{}", self.provenance);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().trim();
        if header != "r_m,u_tm_mps,provenance" {
            return Err(Error::parse("burning curve", format!("unexpected header `{header}`")));
        }
        let mut r = Vec::new();
        let mut u = Vec::new();
        let mut prov = CurveProvenance::Smoothed;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::parse("burning curve", format!("row {}: 3 fields expected", i + 2)));
            }
            let rv: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|e| Error::parse("burning curve", format!("row {}: {e}", i + 2)))?;
            let uv: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|e| Error::parse("burning curve", format!("row {}: {e}", i + 2)))?;
            prov = match parts[2].trim() {
                "raw" => CurveProvenance::Raw,
                "smoothed" => CurveProvenance::Smoothed,
                other => {
                    return Err(Error::parse(
                        "burning curve",
                        format!("row {}: unknown provenance `{other}`", i + 2),
                    ))
                }
            };
            r.push(rv);
            u.push(uv);
        }
        Ok(BurningCurve { r, u_tm: u, provenance: prov })
    }
}

/// Savitzky-Golay window and polynomial order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgConfig {
    pub window: usize,
    pub poly_order: usize,
}

impl SgConfig {
    pub fn new(window: usize, poly_order: usize) -> Result<Self> {
        let cfg = SgConfig { window, poly_order };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "SG window must be an odd integer >= 3 (got {})",
                self.window
            )));
        }
        if self.poly_order >= self.window {
            return Err(Error::InvalidInput(format!(
                "SG polynomial order {} must be below the window {}",
                self.poly_order, self.window
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Savitzky-Golay smoothing
// ---------------------------------------------------------------------------

/// Least-squares fit of a degree-`order` polynomial to `(offsets, y)`
/// evaluated at offset `at`.
fn polyfit_eval(offsets: &[f64], y: &[f64], order: usize, at: f64) -> Result<f64> {
    let rows: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&x| (0..=order).map(|k| x.powi(k as i32)).collect())
        .collect();
    let a = DesignMatrix::from_rows(&rows)?;
    let c = linalg::lstsq(&a, y)?;
    Ok((0..=order).map(|k| c[k] * at.powi(k as i32)).sum())
}

/// Savitzky-Golay smoothing: each sample is replaced by the value of the
/// least-squares polynomial fitted over its window. Interior points use a
/// precomputed symmetric convolution kernel; the first and last half
/// windows fall back to one-sided polynomial fits over the truncated
/// window, so no samples are fabricated beyond the series ends.
pub fn savgol_smooth(y: &[f64], cfg: &SgConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = y.len();
    let w = cfg.window;
    if n < w {
        return Err(Error::InsufficientData(format!(
            "series of length {n} is shorter than the SG window {w}"
        )));
    }
    let half = w / 2;

    // Symmetric kernel: row of the least-squares projection that yields
    // the fitted value at the window center.
    let offsets: Vec<f64> = (0..w).map(|i| i as f64 - half as f64).collect();
    let mut kernel = vec![0.0; w];
    for j in 0..w {
        let mut basis = vec![0.0; w];
        basis[j] = 1.0;
        kernel[j] = polyfit_eval(&offsets, &basis, cfg.poly_order, 0.0)?;
    }

    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= half && i + half < n {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                acc += k * y[i - half + j];
            }
            out[i] = acc;
        } else {
            // One-sided fit over the window clipped to the series; the
            // order drops to keep the fit determined when fewer samples
            // than poly_order + 1 remain.
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let order = cfg.poly_order.min(hi - lo - 1);
            let offs: Vec<f64> = (lo..hi).map(|j| j as f64 - i as f64).collect();
            out[i] = polyfit_eval(&offs, &y[lo..hi], order, 0.0)?;
        }
    }
    Ok(out)
}

/// Keep every `factor`-th sample starting at index 0.
pub fn downsample<T: Copy>(series: &[T], factor: usize) -> Vec<T> {
    if factor <= 1 {
        return series.to_vec();
    }
    series.iter().step_by(factor).copied().collect()
}

// ---------------------------------------------------------------------------
// Truncation and differentiation
// ---------------------------------------------------------------------------

/// Cut the trace at its global pressure maximum (first occurrence), set
/// the peak-pressure metadata from the data, and drop any sample sitting
/// below the running maximum so the rising branch is monotone.
pub fn truncate_at_peak(trace: &PressureTrace) -> Result<PressureTrace> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("empty pressure trace".into()));
    }
    let mut argmax = 0;
    for (i, &v) in trace.p.iter().enumerate() {
        if v > trace.p[argmax] {
            argmax = i;
        }
    }
    let mut t = Vec::with_capacity(argmax + 1);
    let mut p = Vec::with_capacity(argmax + 1);
    let mut running = f64::NEG_INFINITY;
    for i in 0..=argmax {
        if trace.p[i] >= running {
            running = trace.p[i];
            t.push(trace.t[i]);
            p.push(trace.p[i]);
        }
    }
    let meta = TraceMeta { pf_mpa: trace.p[argmax], ..trace.meta };
    meta.validate()?;
    Ok(PressureTrace { t, p, meta })
}

/// Second-order finite-difference derivative on a possibly nonuniform
/// grid: three-point Lagrange stencils, one-sided at the ends.
pub fn derivative(t: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    if t.len() != p.len() {
        return Err(Error::Dimension(format!("{} times vs {} values", t.len(), p.len())));
    }
    if t.len() < 3 {
        return Err(Error::InsufficientData("derivative needs at least 3 samples".into()));
    }
    for w in t.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(
                "derivative requires strictly increasing timestamps".into(),
            ));
        }
    }
    let n = t.len();
    // Derivative of the quadratic through (t0,p0),(t1,p1),(t2,p2) at x.
    let stencil = |i0: usize, i1: usize, i2: usize, x: f64| -> f64 {
        let (t0, t1, t2) = (t[i0], t[i1], t[i2]);
        p[i0] * (2.0 * x - t1 - t2) / ((t0 - t1) * (t0 - t2))
            + p[i1] * (2.0 * x - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + p[i2] * (2.0 * x - t0 - t1) / ((t2 - t0) * (t2 - t1))
    };
    let mut d = vec![0.0; n];
    d[0] = stencil(0, 1, 2, t[0]);
    for i in 1..n - 1 {
        d[i] = stencil(i - 1, i, i + 1, t[i]);
    }
    d[n - 1] = stencil(n - 3, n - 2, n - 1, t[n - 1]);
    Ok(d)
}

// ---------------------------------------------------------------------------
// Fractional burning-rate thermodynamics
// ---------------------------------------------------------------------------

fn burned_fraction_bracket(p: f64, meta: &TraceMeta) -> f64 {
    let ratio = (meta.p0_mpa / p).powf(1.0 / meta.gamma_u);
    1.0 - ratio * (meta.pf_mpa - p) / (meta.pf_mpa - meta.p0_mpa)
}

/// Turbulent mass burning velocity from the pressure rise:
///
/// `u_tm = (P0/P)^(1/γu) · {1 − (P0/P)^(1/γu)·(Pf−P)/(Pf−P0)}^(−2/3)
///         · R0/(3(Pf−P0)) · dP/dt`
///
/// The trace must be truncated and restricted above the singularity guard
/// (`P > P0`); pressures at or below `P0` are rejected.
pub fn compute_utm(trace: &PressureTrace, dpdt: &[f64]) -> Result<Vec<f64>> {
    if dpdt.len() != trace.len() {
        return Err(Error::Dimension(format!(
            "{} derivative samples vs {} pressures",
            dpdt.len(),
            trace.len()
        )));
    }
    trace.meta.validate()?;
    let meta = &trace.meta;
    let scale = meta.r0_m / (3.0 * (meta.pf_mpa - meta.p0_mpa));
    let mut out = Vec::with_capacity(trace.len());
    for (i, (&p, &dp)) in trace.p.iter().zip(dpdt).enumerate() {
        if p <= meta.p0_mpa {
            return Err(Error::InvalidInput(format!(
                "sample {i}: pressure {p} MPa at or below P0 {} MPa violates the singularity guard",
                meta.p0_mpa
            )));
        }
        let ratio = (meta.p0_mpa / p).powf(1.0 / meta.gamma_u);
        let bracket = burned_fraction_bracket(p, meta);
        out.push(ratio * bracket.powf(-2.0 / 3.0) * scale * dp);
    }
    Ok(out)
}

/// Flame radius from the same formulation:
/// `r_m = R0 · {1 − (P0/P)^(1/γu)·(Pf−P)/(Pf−P0)}^(1/3)`.
///
/// Bracket values pushed below zero by numerical noise are clamped to
/// zero; the count of clamped samples is returned alongside the series.
pub fn compute_rm(trace: &PressureTrace) -> Result<(Vec<f64>, usize)> {
    trace.meta.validate()?;
    let mut clamped = 0;
    let mut out = Vec::with_capacity(trace.len());
    for &p in &trace.p {
        let mut bracket = burned_fraction_bracket(p, &trace.meta);
        if bracket < 0.0 {
            bracket = 0.0;
            clamped += 1;
        }
        out.push(trace.meta.r0_m * bracket.powf(1.0 / 3.0));
    }
    Ok((out, clamped))
}

// ---------------------------------------------------------------------------
// Re-parameterization and geometry
// ---------------------------------------------------------------------------

/// Sort `(r, u_tm)` pairs by radius, clip to the analysis window, and
/// apply the second smoothing stage over the r-ordered sequence. Both the
/// raw (sorted, clipped) and smoothed curves are returned.
pub fn reparam_utm_vs_r(
    u_tm: &[f64],
    r_m: &[f64],
    window: (f64, f64),
    stage2: &SgConfig,
) -> Result<(BurningCurve, BurningCurve)> {
    if u_tm.len() != r_m.len() {
        return Err(Error::Dimension(format!(
            "{} velocities vs {} radii",
            u_tm.len(),
            r_m.len()
        )));
    }
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::InvalidInput(format!(
            "analysis window [{lo}, {hi}] is empty"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = r_m
        .iter()
        .zip(u_tm)
        .filter(|(&r, _)| r >= lo && r <= hi)
        .map(|(&r, &u)| (r, u))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no samples fall inside the analysis window [{lo}, {hi}]"
        )));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let r: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let u: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let smoothed = savgol_smooth(&u, stage2)?;
    Ok((
        BurningCurve { r: r.clone(), u_tm: u, provenance: CurveProvenance::Raw },
        BurningCurve { r, u_tm: smoothed, provenance: CurveProvenance::Smoothed },
    ))
}

/// Flame wrinkling ratio with a physical-plausibility flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrinkling {
    pub ratio: f64,
    /// Ratios below 1 mean the wrinkled surface is smaller than the
    /// equivalent smooth sphere, which is physically suspect.
    pub suspect: bool,
}

/// `A_3D / (4π r_3D²)`.
pub fn wrinkling_ratio(a3d: f64, r3d: f64) -> Result<Wrinkling> {
    if a3d <= 0.0 || r3d <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "wrinkling ratio needs positive area and radius (got A={a3d}, r={r3d})"
        )));
    }
    let ratio = a3d / (4.0 * std::f64::consts::PI * r3d * r3d);
    Ok(Wrinkling { ratio, suspect: ratio < 1.0 })
}

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// First smoothing stage, applied to the raw pressure signal.
    pub stage1: SgConfig,
    pub downsample: usize,
    /// Second smoothing stage, applied to `u_tm` over the r-ordered curve.
    pub stage2: SgConfig,
    /// Fraction of the pressure rise excluded above `P0` to avoid the
    /// `(·)^(-2/3)` blow-up at small radii.
    pub eps_frac: f64,
    /// Analysis window in radius; defaults to the full admitted range.
    pub r_window: Option<(f64, f64)>,
    /// Optional peak-pressure override for consistency studies.
    pub pf_override: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage1: SgConfig { window: 51, poly_order: 3 },
            downsample: 10,
            stage2: SgConfig { window: 11, poly_order: 3 },
            eps_frac: 0.02,
            r_window: None,
            pf_override: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub raw: BurningCurve,
    pub smoothed: BurningCurve,
    pub warnings: Vec<String>,
}

/// Full measurement chain from a raw pressure trace to the final
/// high-fidelity `u_tm(r)` target curve.
pub fn process_pressure_trace(
    trace: &PressureTrace,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let mut warnings = Vec::new();

    let smoothed_p = savgol_smooth(&trace.p, &cfg.stage1)?;
    let t = downsample(&trace.t, cfg.downsample);
    let p = downsample(&smoothed_p, cfg.downsample);
    let trace = PressureTrace::new(t, p, trace.meta)?;
    let mut trace = truncate_at_peak(&trace)?;
    if let Some(pf) = cfg.pf_override {
        trace.meta.pf_mpa = pf;
        trace.meta.validate()?;
    }

    let dpdt = derivative(&trace.t, &trace.p)?;

    // Singularity guard: keep samples with P >= P0 + eps_frac * (Pf - P0).
    let floor = trace.meta.p0_mpa + cfg.eps_frac * (trace.meta.pf_mpa - trace.meta.p0_mpa);
    let keep: Vec<usize> = (0..trace.len()).filter(|&i| trace.p[i] >= floor).collect();
    if keep.len() < cfg.stage2.window {
        return Err(Error::InsufficientData(format!(
            "only {} samples above the singularity guard; stage-2 window needs {}",
            keep.len(),
            cfg.stage2.window
        )));
    }
    let guarded = PressureTrace::new(
        keep.iter().map(|&i| trace.t[i]).collect(),
        keep.iter().map(|&i| trace.p[i]).collect(),
        trace.meta,
    )?;
    let dpdt: Vec<f64> = keep.iter().map(|&i| dpdt[i]).collect();

    let u_tm = compute_utm(&guarded, &dpdt)?;
    let (r_m, clamped) = compute_rm(&guarded)?;
    if clamped > 0 {
        warnings.push(format!("{clamped} radius samples clamped at zero burned fraction"));
    }

    let window = cfg.r_window.unwrap_or((
        r_m.iter().cloned().fold(f64::INFINITY, f64::min),
        r_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ));
    let (raw, smoothed) = reparam_utm_vs_r(&u_tm, &r_m, window, &cfg.stage2)?;
    Ok(PipelineOutput { raw, smoothed, warnings })
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Pressure-trace CSV with header `t_s,P_MPa`; thermodynamic metadata
/// lives in a TOML sidecar with keys `P0_MPa`, `gamma_u`, `R0_m`.
pub fn write_pressure_csv(trace: &PressureTrace, path: &Path) -> Result<()> {
    let mut out = String::from("t_s,P_MPa\n");
    for (t, p) in trace.t.iter().zip(&trace.p) {
        let _ = writeln!(out, "{t},{p}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    #[serde(rename = "P0_MPa")]
    p0_mpa: f64,
    gamma_u: f64,
    #[serde(rename = "R0_m")]
    r0_m: f64,
}

pub fn write_meta_sidecar(meta: &TraceMeta, path: &Path) -> Result<()> {
    let sc = Sidecar { p0_mpa: meta.p0_mpa, gamma_u: meta.gamma_u, r0_m: meta.r0_m };
    let text = toml::to_string(&sc).map_err(|e| Error::parse("metadata sidecar", e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a pressure trace from `<csv path>` plus its metadata sidecar.
/// The peak pressure is derived from the samples (possibly re-derived at
/// truncation).
pub fn read_pressure_csv(csv_path: &Path, sidecar_path: &Path) -> Result<PressureTrace> {
    let meta_text = std::fs::read_to_string(sidecar_path)?;
    let sc: Sidecar = toml::from_str(&meta_text)
        .map_err(|e| Error::parse(sidecar_path.display().to_string(), e.to_string()))?;

    let text = std::fs::read_to_string(csv_path)?;
    let ctx = csv_path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "t_s,P_MPa" {
        return Err(Error::parse(ctx, format!("unexpected header `{header}`")));
    }
    let mut t = Vec::new();
    let mut p = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::parse(&ctx[..], format!("row {}: 2 fields expected", i + 2)));
        }
        t.push(
            parts[0]
                .trim()
                .parse()
                .map_err(|e| Error::parse(&ctx[..], format!("row {}: {e}", i + 2)))?,
        );
        p.push(
            parts[1]
                .trim()
                .parse()
                .map_err(|e| Error::parse(&ctx[..], format!("row {}: {e}", i + 2)))?,
        );
    }
    let pf = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    PressureTrace::new(
        t,
        p,
        TraceMeta { p0_mpa: sc.p0_mpa, pf_mpa: pf, gamma_u: sc.gamma_u, r0_m: sc.r0_m },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> TraceMeta {
        TraceMeta { p0_mpa: 0.1, pf_mpa: 0.8, gamma_u: 1.4, r0_m: 0.19 }
    }

    #[test]
    fn constant_series_passes_unchanged() {
        let y = vec![2.5; 30];
        let out = savgol_smooth(&y, &SgConfig { window: 11, poly_order: 3 }).unwrap();
        for v in out {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_reproduced_by_cubic_filter() {
        let y: Vec<f64> = (0..60).map(|i| {
            let t = i as f64 / 10.0;
            t * t * t
        }).collect();
        let out = savgol_smooth(&y, &SgConfig { window: 11, poly_order: 3 }).unwrap();
        for (i, (a, b)) in out.iter().zip(&y).enumerate().skip(5).take(50) {
            assert!((a - b).abs() < 1e-9, "sample {i}: {a} vs {b}");
        }
    }

    #[test]
    fn noise_variance_reduced_at_least_five_fold() {
        // Monte-Carlo oracle: slow sine plus uniform noise of amplitude
        // 0.1, averaged over 100 seeds.
        let n = 400;
        let clean: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let cfg = SgConfig { window: 21, poly_order: 3 };
        let mut noise_var_sum = 0.0;
        let mut resid_var_sum = 0.0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<f64> = clean
                .iter()
                .map(|c| c + 0.1 * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            let noise_var = noisy
                .iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            let sm = savgol_smooth(&noisy, &cfg).unwrap();
            let resid_var = sm
                .iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64;
            noise_var_sum += noise_var;
            resid_var_sum += resid_var;
        }
        let reduction = noise_var_sum / resid_var_sum;
        assert!(reduction >= 5.0, "only {reduction:.2}x variance reduction");
    }

    #[test]
    fn savgol_rejects_short_series() {
        assert!(savgol_smooth(&[1.0, 2.0, 3.0], &SgConfig { window: 11, poly_order: 3 }).is_err());
    }

    #[test]
    fn sg_config_validation() {
        assert!(SgConfig::new(4, 2).is_err()); // even window
        assert!(SgConfig::new(1, 0).is_err()); // too small
        assert!(SgConfig::new(5, 5).is_err()); // order not below window
        assert!(SgConfig::new(5, 4).is_ok());
    }

    #[test]
    fn downsample_examples() {
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(downsample(&s, 1), s);
        assert_eq!(downsample(&s, 3), vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(downsample(&s, 100), vec![0.0]);
    }

    #[test]
    fn truncate_monotone_trace_is_identity() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        let p: Vec<f64> = (0..10).map(|i| 0.1 + 0.05 * i as f64).collect();
        let trace = PressureTrace::new(t.clone(), p.clone(), meta()).unwrap();
        let cut = truncate_at_peak(&trace).unwrap();
        assert_eq!(cut.t, t);
        assert_eq!(cut.p, p);
        assert_eq!(cut.meta.pf_mpa, *p.last().unwrap());
    }

    #[test]
    fn truncate_removes_falling_tail() {
        let t: Vec<f64> = (0..8).map(|i| i as f64 * 0.01).collect();
        let p = vec![0.1, 0.2, 0.4, 0.6, 0.8, 0.7, 0.5, 0.3];
        let trace = PressureTrace::new(t, p, meta()).unwrap();
        let cut = truncate_at_peak(&trace).unwrap();
        assert_eq!(cut.p, vec![0.1, 0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn truncate_removes_mid_rise_dip_matching_running_max_scan() {
        let t: Vec<f64> = (0..9).map(|i| i as f64 * 0.01).collect();
        let p = vec![0.1, 0.25, 0.4, 0.38, 0.39, 0.55, 0.7, 0.8, 0.6];
        let trace = PressureTrace::new(t, p.clone(), meta()).unwrap();
        let cut = truncate_at_peak(&trace).unwrap();

        // Brute-force oracle: walk to the argmax keeping running maxima.
        let argmax = 7;
        let mut expected = Vec::new();
        let mut run = f64::NEG_INFINITY;
        for v in p.iter().take(argmax + 1) {
            if *v >= run {
                run = *v;
                expected.push(*v);
            }
        }
        assert_eq!(cut.p, expected);
        assert_eq!(cut.p.len(), 6);
    }

    #[test]
    fn derivative_linear_and_quadratic_are_exact() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let lin: Vec<f64> = t.iter().map(|&x| 5.0 * x).collect();
        let d = derivative(&t, &lin).unwrap();
        for v in d {
            assert!((v - 5.0).abs() < 1e-10);
        }

        let quad: Vec<f64> = t.iter().map(|&x| x * x).collect();
        let d = derivative(&t, &quad).unwrap();
        for (i, &x) in t.iter().enumerate() {
            assert!((d[i] - 2.0 * x).abs() < 1e-9, "at {x}: {} vs {}", d[i], 2.0 * x);
        }
    }

    #[test]
    fn derivative_second_order_accurate_on_smooth_signal() {
        // Fine-grid oracle: halving the step shrinks the max error by ~4.
        let f = |x: f64| (3.0 * x).sin() + 0.5 * x;
        let df = |x: f64| 3.0 * (3.0 * x).cos() + 0.5;
        let err_at = |n: usize| -> f64 {
            let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let p: Vec<f64> = t.iter().map(|&x| f(x)).collect();
            let d = derivative(&t, &p).unwrap();
            t.iter()
                .zip(&d)
                .map(|(&x, &v)| (v - df(x)).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err_at(101);
        let e2 = err_at(201);
        assert!(e1 / e2 > 3.0, "convergence rate too low: {e1:e} -> {e2:e}");
    }

    #[test]
    fn utm_bracket_collapses_at_peak() {
        let m = meta();
        let trace = PressureTrace::new(
            vec![0.0, 0.01, 0.02],
            vec![0.45, 0.6, 0.8],
            m,
        )
        .unwrap();
        let dpdt = vec![2.0, 2.0, 2.0];
        let u = compute_utm(&trace, &dpdt).unwrap();
        // At P = Pf the bracket term is exactly 1.
        let expected = (m.p0_mpa / m.pf_mpa).powf(1.0 / m.gamma_u) * m.r0_m * 2.0
            / (3.0 * (m.pf_mpa - m.p0_mpa));
        assert!((u[2] - expected).abs() < 1e-15);
    }

    #[test]
    fn utm_worked_example() {
        // Independent one-line evaluation of the closed form at
        // P0=0.1, Pf=0.8 MPa, gamma=1.4, R0=0.19 m, P=0.45 MPa,
        // dP/dt=2 MPa/s.
        let expected = (0.1f64 / 0.45).powf(1.0 / 1.4)
            * (1.0 - (0.1f64 / 0.45).powf(1.0 / 1.4) * ((0.8 - 0.45) / (0.8 - 0.1)))
                .powf(-2.0 / 3.0)
            * 0.19
            / (3.0 * (0.8 - 0.1))
            * 2.0;
        assert!((expected - 0.0700).abs() < 1e-4);

        let trace =
            PressureTrace::new(vec![0.0, 0.01], vec![0.3, 0.45], meta()).unwrap();
        let u = compute_utm(&trace, &[1.0, 2.0]).unwrap();
        assert!((u[1] - expected).abs() < 1e-10);
    }

    #[test]
    fn utm_zero_derivative_gives_zero() {
        let trace = PressureTrace::new(vec![0.0, 0.01], vec![0.3, 0.45], meta()).unwrap();
        let u = compute_utm(&trace, &[0.0, 0.0]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn utm_rejects_pressure_at_or_below_p0() {
        let trace = PressureTrace::new(vec![0.0, 0.01], vec![0.1, 0.45], meta()).unwrap();
        assert!(compute_utm(&trace, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn rm_boundary_identities() {
        let m = meta();
        let trace = PressureTrace::new(
            vec![0.0, 0.01, 0.02],
            vec![m.p0_mpa, 0.45, m.pf_mpa],
            m,
        )
        .unwrap();
        let (r, clamped) = compute_rm(&trace).unwrap();
        assert_eq!(clamped, 0);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[2], m.r0_m);

        // Worked midpoint value, evaluated independently.
        let expected = 0.19
            * (1.0 - (0.1f64 / 0.45).powf(1.0 / 1.4) * ((0.8 - 0.45) / (0.8 - 0.1)))
                .powf(1.0 / 3.0);
        assert!((expected - 0.1785).abs() < 1e-4);
        assert!((r[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn rm_clamps_negative_bracket_from_noise() {
        // A sample dipping below P0 (smoothing artifact) drives the
        // burned-fraction bracket negative; it must clamp to zero rather
        // than produce NaN from the cube root.
        let m = meta();
        let trace = PressureTrace::new(
            vec![0.0, 0.01, 0.02],
            vec![0.098, 0.3, 0.8],
            m,
        )
        .unwrap();
        let (r, clamped) = compute_rm(&trace).unwrap();
        assert_eq!(clamped, 1);
        assert_eq!(r[0], 0.0);
        assert!(r.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn reparam_sorts_clips_and_matches_scan_count() {
        let r = vec![0.05, 0.01, 0.03, 0.07, 0.021, 0.04, 0.055, 0.035, 0.045, 0.06, 0.025, 0.033];
        let u: Vec<f64> = r.iter().map(|&x| 10.0 * x + 0.1).collect();
        let window = (0.02, 0.06);
        let cfg = SgConfig { window: 3, poly_order: 1 };
        let (raw, smoothed) = reparam_utm_vs_r(&u, &r, window, &cfg).unwrap();

        let expected_count = r.iter().filter(|&&x| (0.02..=0.06).contains(&x)).count();
        assert_eq!(raw.r.len(), expected_count);
        assert_eq!(smoothed.r.len(), expected_count);
        for w in raw.r.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(raw.provenance, CurveProvenance::Raw);
        assert_eq!(smoothed.provenance, CurveProvenance::Smoothed);
    }

    #[test]
    fn reparam_rejects_empty_window() {
        let r = vec![0.01, 0.02];
        let u = vec![0.1, 0.2];
        let cfg = SgConfig { window: 3, poly_order: 1 };
        assert!(reparam_utm_vs_r(&u, &r, (0.5, 0.5), &cfg).is_err());
        assert!(reparam_utm_vs_r(&u, &r, (0.5, 0.9), &cfg).is_err());
    }

    #[test]
    fn wrinkling_examples() {
        let w = wrinkling_ratio(4.0 * std::f64::consts::PI, 1.0).unwrap();
        assert!((w.ratio - 1.0).abs() < 1e-15);
        assert!(!w.suspect);

        let w = wrinkling_ratio(8.0 * std::f64::consts::PI, 1.0).unwrap();
        assert!((w.ratio - 2.0).abs() < 1e-15);

        let w = wrinkling_ratio(0.0125, 0.03).unwrap();
        let expected = 0.0125 / (4.0 * std::f64::consts::PI * 9e-4);
        assert!((expected - 1.105).abs() < 1e-3);
        assert!((w.ratio - expected).abs() < 1e-15);

        assert!(wrinkling_ratio(-1.0, 0.5).is_err());
        assert!(wrinkling_ratio(1.0, 0.0).is_err());

        let w = wrinkling_ratio(0.5 * std::f64::consts::PI, 1.0).unwrap();
        assert!(w.suspect);
    }

    fn synthetic_trace(n: usize, noise: f64, seed: u64) -> PressureTrace {
        // Smooth sigmoid rise from P0 to beyond Pf then a slight fall.
        let m = meta();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 1e-4).collect();
        let p: Vec<f64> = t
            .iter()
            .map(|&x| {
                let s = 1.0 / (1.0 + (-(x - 0.05) / 0.008).exp());
                m.p0_mpa
                    + (m.pf_mpa - m.p0_mpa) * s
                    + noise * (2.0 * rng.random::<f64>() - 1.0)
            })
            .collect();
        PressureTrace::new(t, p, m).unwrap()
    }

    #[test]
    fn pipeline_runs_end_to_end_and_is_deterministic() {
        let trace = synthetic_trace(1200, 2e-4, 9);
        let cfg = PipelineConfig::default();
        let out1 = process_pressure_trace(&trace, &cfg).unwrap();
        let out2 = process_pressure_trace(&trace, &cfg).unwrap();
        assert_eq!(out1.smoothed, out2.smoothed);
        assert!(out1.smoothed.r.iter().all(|&r| r > 0.0 && r <= meta().r0_m + 1e-12));
        assert!(out1.smoothed.u_tm.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn utm_invariant_under_common_pressure_rescaling() {
        // Pressure enters only through ratios and the rise-normalized
        // derivative, so scaling P, P0, Pf and dP/dt together changes
        // nothing.
        let m = meta();
        let trace = PressureTrace::new(vec![0.0, 0.01], vec![0.3, 0.45], m).unwrap();
        let u1 = compute_utm(&trace, &[1.5, 2.0]).unwrap();

        let k = 7.3;
        let m2 = TraceMeta { p0_mpa: m.p0_mpa * k, pf_mpa: m.pf_mpa * k, ..m };
        let trace2 =
            PressureTrace::new(vec![0.0, 0.01], vec![0.3 * k, 0.45 * k], m2).unwrap();
        let u2 = compute_utm(&trace2, &[1.5 * k, 2.0 * k]).unwrap();
        for (a, b) in u1.iter().zip(&u2) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pressure_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("trace.csv");
        let side = dir.path().join("trace.meta.toml");
        let trace = synthetic_trace(200, 0.0, 1);
        write_pressure_csv(&trace, &csv).unwrap();
        write_meta_sidecar(&trace.meta, &side).unwrap();
        let back = read_pressure_csv(&csv, &side).unwrap();
        assert_eq!(back.t, trace.t);
        assert_eq!(back.p, trace.p);
        assert_eq!(back.meta.p0_mpa, trace.meta.p0_mpa);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // r_m(P0) = 0 and r_m(Pf) = R0 exactly, and r_m strictly
        // increases with pressure in between.
        #[test]
        fn prop_rm_boundaries_and_monotonicity(
            p0 in 0.05f64..0.5,
            rise in 0.2f64..3.0,
            gamma in 1.05f64..1.66,
            r0 in 0.05f64..0.5,
        ) {
            let pf = p0 + rise;
            let m = TraceMeta { p0_mpa: p0, pf_mpa: pf, gamma_u: gamma, r0_m: r0 };
            let ps: Vec<f64> = (0..12)
                .map(|i| p0 + rise * i as f64 / 11.0)
                .collect();
            let t: Vec<f64> = (0..12).map(|i| i as f64).collect();
            let trace = PressureTrace::new(t, ps, m).unwrap();
            let (r, _) = compute_rm(&trace).unwrap();
            prop_assert!(r[0].abs() < 1e-12);
            prop_assert!((r[11] - r0).abs() < 1e-12);
            for w in r.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        // Polynomials up to the filter order pass through unchanged,
        // edges included (one-sided fits reproduce them too).
        #[test]
        fn prop_savgol_polynomial_reproduction(
            c0 in -2.0f64..2.0,
            c1 in -2.0f64..2.0,
            c2 in -2.0f64..2.0,
            window in prop::sample::select(vec![5usize, 11, 21]),
        ) {
            let y: Vec<f64> = (0..50)
                .map(|i| {
                    let x = i as f64 / 10.0;
                    c0 + c1 * x + c2 * x * x
                })
                .collect();
            let out = savgol_smooth(&y, &SgConfig { window, poly_order: 2 }).unwrap();
            for (a, b) in out.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
