//! Low-fidelity trend construction.
//!
//! Three trend families cover the observables handled by the crate:
//!
//! - hierarchical log-quadratic models for flame surface area and
//!   volume-equivalent radius: a second-order polynomial in log time per
//!   operating condition, whose coefficients are regressed over
//!   `(u', phi)` and shifted by per-`(T, P)` thermodynamic offsets;
//! - linear-in-radius models for the turbulent mass burning velocity,
//!   with slope and intercept regressed over `u'`;
//! - linear-in-time radius models for quiescent pressure sweeps, with
//!   slope and intercept interpolated piecewise-linearly in pressure.
//!
//! A fitted [`TrendModel`] evaluates anywhere inside (or, with a warning,
//! outside) its validity hull and expands into a dense [`LofiGrid`] that
//! serves as the low-fidelity training set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, DesignMatrix};
use crate::{Error, Result};

/// Matching tolerance for floating-point condition levels (u', P, T).
pub const LEVEL_TOL: f64 = 1e-9;

pub fn levels_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= LEVEL_TOL * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Log-quadratic temporal fits
// ---------------------------------------------------------------------------

/// Coefficients of `log(y) = c0 + c1·log t + c2·(log t)^2` (natural log).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogQuadCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogQuadFit {
    pub coeffs: LogQuadCoeffs,
    /// RMS residual in log space at the fitting abscissae.
    pub rms_log_residual: f64,
}

/// Ordinary least squares on `(log t, log y)`.
pub fn fit_log_quadratic(times: &[f64], values: &[f64]) -> Result<LogQuadFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 3 {
        return Err(Error::InsufficientData(
            "log-quadratic fit needs at least 3 points".into(),
        ));
    }
    let mut distinct = times.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| levels_match(*a, *b));
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(
            "log-quadratic fit needs at least 3 distinct times".into(),
        ));
    }
    for (i, (&t, &y)) in times.iter().zip(values).enumerate() {
        if t <= 0.0 || y <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "log-quadratic fit requires positive times and values (sample {i}: t={t}, y={y})"
            )));
        }
    }

    let rows: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let lt = t.ln();
            vec![1.0, lt, lt * lt]
        })
        .collect();
    let rhs: Vec<f64> = values.iter().map(|&y| y.ln()).collect();
    let a = DesignMatrix::from_rows(&rows)?;
    let x = linalg::lstsq(&a, &rhs)?;
    let rms = linalg::rms_residual(&a, &rhs, &x);
    Ok(LogQuadFit {
        coeffs: LogQuadCoeffs { c0: x[0], c1: x[1], c2: x[2] },
        rms_log_residual: rms,
    })
}

/// `exp(c0 + c1·ln t + c2·(ln t)^2)`; positive by construction.
pub fn eval_log_quadratic(c: &LogQuadCoeffs, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "log-quadratic evaluation requires t > 0 (got {t})"
        )));
    }
    let lt = t.ln();
    Ok((c.c0 + c.c1 * lt + c.c2 * lt * lt).exp())
}

// ---------------------------------------------------------------------------
// Coefficient surfaces over (u', phi)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Affine in `(u', phi)`.
    Linear,
    /// Up to total degree 2. Defaults to quadratic in `u'` and linear in
    /// `phi`; the `u'·phi` and `phi^2` terms join only with at least 8
    /// support points.
    Quad2d,
}

/// One monomial `u'^u_pow · phi^phi_pow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceTerm {
    pub u_pow: u8,
    pub phi_pow: u8,
}

impl SurfaceTerm {
    fn eval(&self, u: f64, phi: f64) -> f64 {
        u.powi(self.u_pow as i32) * phi.powi(self.phi_pow as i32)
    }
}

/// Polynomial surface for one trend coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSurface {
    pub basis: Basis,
    pub terms: Vec<SurfaceTerm>,
    pub coeffs: Vec<f64>,
    /// True when rank deficiency or lack of points forced a smaller term
    /// set than the requested basis implies.
    pub downgraded: bool,
}

impl CoeffSurface {
    pub fn eval(&self, u: f64, phi: f64) -> f64 {
        self.terms
            .iter()
            .zip(&self.coeffs)
            .map(|(t, c)| c * t.eval(u, phi))
            .sum()
    }

    pub fn constant(value: f64) -> Self {
        CoeffSurface {
            basis: Basis::Linear,
            terms: vec![SurfaceTerm { u_pow: 0, phi_pow: 0 }],
            coeffs: vec![value],
            downgraded: false,
        }
    }
}

fn term_ladder(basis: Basis, n_points: usize, phi_varies: bool) -> Vec<Vec<SurfaceTerm>> {
    let t = |u_pow: u8, phi_pow: u8| SurfaceTerm { u_pow, phi_pow };
    let mut ladder = Vec::new();
    match basis {
        Basis::Quad2d => {
            if phi_varies && n_points >= 8 {
                ladder.push(vec![t(0, 0), t(1, 0), t(2, 0), t(0, 1), t(1, 1), t(0, 2)]);
            }
            if phi_varies {
                ladder.push(vec![t(0, 0), t(1, 0), t(2, 0), t(0, 1)]);
            }
            ladder.push(vec![t(0, 0), t(1, 0), t(2, 0)]);
            if phi_varies {
                ladder.push(vec![t(0, 0), t(1, 0), t(0, 1)]);
            }
            ladder.push(vec![t(0, 0), t(1, 0)]);
            ladder.push(vec![t(0, 0)]);
        }
        Basis::Linear => {
            if phi_varies {
                ladder.push(vec![t(0, 0), t(1, 0), t(0, 1)]);
            }
            ladder.push(vec![t(0, 0), t(1, 0)]);
            ladder.push(vec![t(0, 0)]);
        }
    }
    ladder
}

/// Least-squares polynomial surface through `(u', phi, value)` points.
///
/// Falls back to progressively smaller term sets when the design matrix
/// is underdetermined or rank deficient; the downgrade is recorded on the
/// returned surface.
pub fn fit_coeff_surface(points: &[(f64, f64, f64)], basis: Basis) -> Result<CoeffSurface> {
    if points.is_empty() {
        return Err(Error::InsufficientData("coefficient surface needs points".into()));
    }
    let phi_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let phi_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let phi_varies = !levels_match(phi_min, phi_max);

    let ladder = term_ladder(basis, points.len(), phi_varies);
    let full_size = ladder[0].len();
    for terms in ladder {
        if points.len() < terms.len() {
            continue;
        }
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|&(u, phi, _)| terms.iter().map(|t| t.eval(u, phi)).collect())
            .collect();
        let rhs: Vec<f64> = points.iter().map(|p| p.2).collect();
        let a = DesignMatrix::from_rows(&rows)?;
        match linalg::lstsq(&a, &rhs) {
            Ok(coeffs) => {
                return Ok(CoeffSurface {
                    basis,
                    downgraded: terms.len() < full_size,
                    terms,
                    coeffs,
                });
            }
            Err(Error::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RankDeficient(
        "coefficient surface could not be fit at any basis size".into(),
    ))
}

// ---------------------------------------------------------------------------
// Thermodynamic corrections
// ---------------------------------------------------------------------------

/// A `(T, P)` operating pair, the key of the thermodynamic correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondKey {
    pub temperature_k: f64,
    pub pressure_mpa: f64,
}

impl CondKey {
    pub fn matches(&self, other: &CondKey) -> bool {
        levels_match(self.temperature_k, other.temperature_k)
            && levels_match(self.pressure_mpa, other.pressure_mpa)
    }
}

/// Additive per-coefficient offsets keyed by `(T, P)`; exactly zero at the
/// reference condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoCorrection {
    pub reference: CondKey,
    pub offsets: Vec<(CondKey, [f64; 3])>,
}

impl ThermoCorrection {
    pub fn none(reference: CondKey) -> Self {
        ThermoCorrection { reference, offsets: vec![(reference, [0.0; 3])] }
    }

    pub fn offset_for(&self, key: &CondKey) -> Result<[f64; 3]> {
        self.offsets
            .iter()
            .find(|(k, _)| k.matches(key))
            .map(|(_, d)| *d)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no thermodynamic correction fitted for T={} K, P={} MPa",
                    key.temperature_k, key.pressure_mpa
                ))
            })
    }
}

/// Per-case fitted temporal coefficients at each turbulence level.
#[derive(Debug, Clone)]
pub struct CaseCoeffs {
    pub condition: CondKey,
    /// `(u', phi, fitted coefficients)` per level.
    pub levels: Vec<(f64, f64, LogQuadCoeffs)>,
}

/// Offsets per `(T, P)` pair: the mean, over every level of every case at
/// that pair, of `fitted coefficient − base-surface prediction`. The
/// reference pair gets exact zeros.
pub fn fit_thermo_correction(
    base: &[CoeffSurface; 3],
    cases: &[CaseCoeffs],
    reference: CondKey,
) -> Result<ThermoCorrection> {
    let mut keys: Vec<CondKey> = vec![reference];
    for case in cases {
        if case.levels.is_empty() {
            return Err(Error::InsufficientData(format!(
                "case at T={} K, P={} MPa has no fitted coefficients",
                case.condition.temperature_k, case.condition.pressure_mpa
            )));
        }
        if !keys.iter().any(|k| k.matches(&case.condition)) {
            keys.push(case.condition);
        }
    }

    let mut offsets = Vec::with_capacity(keys.len());
    for key in keys {
        if key.matches(&reference) {
            offsets.push((key, [0.0; 3]));
            continue;
        }
        let mut sums = [0.0; 3];
        let mut count = 0usize;
        for case in cases.iter().filter(|c| c.condition.matches(&key)) {
            for &(u, phi, coeffs) in &case.levels {
                let fitted = [coeffs.c0, coeffs.c1, coeffs.c2];
                for i in 0..3 {
                    sums[i] += fitted[i] - base[i].eval(u, phi);
                }
                count += 1;
            }
        }
        let delta = [
            sums[0] / count as f64,
            sums[1] / count as f64,
            sums[2] / count as f64,
        ];
        offsets.push((key, delta));
    }
    Ok(ThermoCorrection { reference, offsets })
}

// ---------------------------------------------------------------------------
// Linear trends
// ---------------------------------------------------------------------------

/// Ordinary least-squares line; returns `(slope, intercept)`.
pub fn fit_linear_trend(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} x vs {} y", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("linear trend needs at least 2 points".into()));
    }
    let x0 = x[0];
    if x.iter().all(|&v| levels_match(v, x0)) {
        return Err(Error::InvalidInput(
            "linear trend undefined: all abscissae identical".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v, 1.0]).collect();
    let a = DesignMatrix::from_rows(&rows)?;
    let sol = linalg::lstsq(&a, y)?;
    Ok((sol[0], sol[1]))
}

// ---------------------------------------------------------------------------
// Trend models
// ---------------------------------------------------------------------------

pub const TREND_MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrendKind {
    /// `exp(quadratic in ln t)` with coefficient surfaces over `(u', phi)`
    /// plus thermodynamic offsets per `(T, P)`.
    HierarchicalLogQuad {
        base: [CoeffSurface; 3],
        thermo: ThermoCorrection,
    },
    /// `value = slope(u')·r + intercept(u')`.
    RadialLinear {
        slope: CoeffSurface,
        intercept: CoeffSurface,
    },
    /// `value = slope(P)·t + intercept(P)` with piecewise-linear
    /// interpolation (and linear end extrapolation) over fitted pressures.
    PressureLinear {
        pressures_mpa: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
    },
}

/// Closed per-axis interval the model was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub version: u32,
    pub name: String,
    /// Which observable the model predicts (e.g. `a3d_m2`, `utm_mps`).
    pub target: String,
    pub kind: TrendKind,
    /// Convex hull of the training inputs, one range per input axis.
    pub validity: Vec<AxisRange>,
    pub provenance: String,
}

impl TrendModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trend model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrendModel = serde_json::from_str(text)
            .map_err(|e| Error::parse("trend model document", e.to_string()))?;
        if model.version != TREND_MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported trend model version {}",
                model.version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Effective log-quadratic coefficients at an operating point:
    /// base surfaces plus the thermodynamic offset for `(T, P)`.
    pub fn coeffs_at(&self, u: f64, phi: f64, cond: &CondKey) -> Result<[f64; 3]> {
        match &self.kind {
            TrendKind::HierarchicalLogQuad { base, thermo } => {
                let delta = thermo.offset_for(cond)?;
                Ok([
                    base[0].eval(u, phi) + delta[0],
                    base[1].eval(u, phi) + delta[1],
                    base[2].eval(u, phi) + delta[2],
                ])
            }
            _ => Err(Error::InvalidInput(
                "coeffs_at applies to hierarchical log-quadratic models only".into(),
            )),
        }
    }

    pub fn eval_hierarchical(&self, t: f64, u: f64, phi: f64, cond: &CondKey) -> Result<f64> {
        let c = self.coeffs_at(u, phi, cond)?;
        eval_log_quadratic(&LogQuadCoeffs { c0: c[0], c1: c[1], c2: c[2] }, t)
    }

    pub fn eval_radial(&self, r: f64, u: f64) -> Result<f64> {
        match &self.kind {
            TrendKind::RadialLinear { slope, intercept } => {
                Ok(slope.eval(u, 0.0) * r + intercept.eval(u, 0.0))
            }
            _ => Err(Error::InvalidInput("not a radial linear model".into())),
        }
    }

    /// Interpolated slope and intercept at pressure `p` (MPa).
    pub fn pressure_line(&self, p: f64) -> Result<(f64, f64)> {
        match &self.kind {
            TrendKind::PressureLinear { pressures_mpa, slopes, intercepts } => {
                if pressures_mpa.len() == 1 {
                    return Ok((slopes[0], intercepts[0]));
                }
                Ok((
                    linalg::interp_linear(pressures_mpa, slopes, p),
                    linalg::interp_linear(pressures_mpa, intercepts, p),
                ))
            }
            _ => Err(Error::InvalidInput("not a pressure-linear model".into())),
        }
    }

    pub fn eval_pressure(&self, t: f64, p: f64) -> Result<f64> {
        let (a, b) = self.pressure_line(p)?;
        Ok(a * t + b)
    }
}

/// Fit the pressure-sweep family from per-pressure `(t, value)` series.
pub fn fit_pressure_linear(
    series: &[(f64, Vec<f64>, Vec<f64>)],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if series.is_empty() {
        return Err(Error::InsufficientData("no pressure levels to fit".into()));
    }
    let mut fitted: Vec<(f64, f64, f64)> = Vec::with_capacity(series.len());
    for (p, t, r) in series {
        let (a, b) = fit_linear_trend(t, r)?;
        fitted.push((*p, a, b));
    }
    fitted.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    Ok((
        fitted.iter().map(|f| f.0).collect(),
        fitted.iter().map(|f| f.1).collect(),
        fitted.iter().map(|f| f.2).collect(),
    ))
}

// ---------------------------------------------------------------------------
// Dense grids
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

impl GridAxis {
    pub fn new(name: &str, values: Vec<f64>) -> Self {
        GridAxis { name: name.into(), values }
    }

    /// Uniformly spaced axis; a single point when `count == 1`.
    pub fn linspace(name: &str, min: f64, max: f64, count: usize) -> Self {
        let values = if count <= 1 {
            vec![min]
        } else {
            (0..count)
                .map(|i| min + (max - min) * i as f64 / (count - 1) as f64)
                .collect()
        };
        GridAxis { name: name.into(), values }
    }
}

/// Structured evaluation of a trend model over the cartesian product of
/// its axes. `fixed` carries operating-point coordinates that are not
/// gridded (e.g. `phi`, `temperature`, `pressure` for a single case).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofiGrid {
    pub axes: Vec<GridAxis>,
    pub fixed: Vec<(String, f64)>,
    /// Row-major over the axis product; the last axis varies fastest.
    pub values: Vec<f64>,
    /// Name of the generating trend model.
    pub provenance: String,
    pub warnings: Vec<String>,
}

impl LofiGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Axis coordinates of node `idx` in axis order.
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        let mut rem = idx;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            coords[k] = axis.values[rem % axis.values.len()];
            rem /= axis.values.len();
        }
        coords
    }

    /// Tidy CSV, one row per node: axis columns, fixed columns, the
    /// evaluated value and the provenance tag.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for axis in &self.axes {
            let _ = write!(out, "{},", axis.name);
        }
        for (name, _) in &self.fixed {
            let _ = write!(out, "{name},");
        }
        out.push_str("value,provenance\n");
        for (idx, v) in self.values.iter().enumerate() {
            for c in self.node_coords(idx) {
                let _ = write!(out, "{c},");
            }
            for (_, fv) in &self.fixed {
                let _ = write!(out, "{fv},");
            }
            let _ = writeln!(out, "{v},{}", self.provenance);
        }
        out
    }

    /// Parse the tidy CSV back. Node coordinates, values and provenance
    /// round-trip losslessly; a column is reconstructed as an axis when
    /// it varies and as a fixed coordinate otherwise.
    pub fn from_csv(text: &str) -> Result<LofiGrid> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().trim();
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[cols.len() - 2] != "value" || cols[cols.len() - 1] != "provenance"
        {
            return Err(Error::parse("lofi grid", format!("unexpected header `{header}`")));
        }
        let coord_names: Vec<String> =
            cols[..cols.len() - 2].iter().map(|s| s.to_string()).collect();

        let mut coords: Vec<Vec<f64>> = vec![Vec::new(); coord_names.len()];
        let mut values = Vec::new();
        let mut provenance = String::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols.len() {
                return Err(Error::parse(
                    "lofi grid",
                    format!("row {}: {} fields, expected {}", i + 2, parts.len(), cols.len()),
                ));
            }
            for (k, part) in parts[..coord_names.len()].iter().enumerate() {
                coords[k].push(part.trim().parse().map_err(|e| {
                    Error::parse("lofi grid", format!("row {}: {e}", i + 2))
                })?);
            }
            values.push(parts[coord_names.len()].trim().parse().map_err(|e| {
                Error::parse("lofi grid", format!("row {}: {e}", i + 2))
            })?);
            provenance = parts[cols.len() - 1].trim().to_string();
        }

        let mut axes = Vec::new();
        let mut fixed = Vec::new();
        for (name, col) in coord_names.iter().zip(&coords) {
            let mut distinct: Vec<f64> = col.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            if distinct.len() > 1 {
                axes.push(GridAxis { name: name.clone(), values: distinct });
            } else {
                fixed.push((name.clone(), distinct[0]));
            }
        }
        Ok(LofiGrid { axes, fixed, values, provenance, warnings: Vec::new() })
    }
}

fn coord(name: &str, axes: &[(&str, f64)]) -> Result<f64> {
    axes.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::InvalidInput(format!("grid is missing required axis `{name}`")))
}

/// Evaluate `model` at every node of the axis product.
///
/// Axes outside the model's validity hull produce a warning on the grid
/// (not an error); trend models extrapolate smoothly by construction.
pub fn build_lofi_grid(
    model: &TrendModel,
    axes: Vec<GridAxis>,
    fixed: Vec<(String, f64)>,
) -> Result<LofiGrid> {
    let mut warnings = Vec::new();
    for axis in &axes {
        if axis.values.is_empty() {
            return Err(Error::InvalidInput(format!("axis `{}` has no values", axis.name)));
        }
        if let Some(range) = model.validity.iter().find(|r| r.name == axis.name) {
            let lo = axis.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = axis.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack = LEVEL_TOL * range.max.abs().max(range.min.abs()).max(1.0);
            if lo < range.min - slack || hi > range.max + slack {
                warnings.push(format!(
                    "axis `{}` [{lo}, {hi}] extends outside the model validity hull [{}, {}]",
                    axis.name, range.min, range.max
                ));
            }
        }
    }

    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut values = Vec::with_capacity(total);
    let grid = LofiGrid {
        axes,
        fixed,
        values: Vec::new(),
        provenance: model.name.clone(),
        warnings,
    };

    for idx in 0..total {
        let coords = grid.node_coords(idx);
        let mut named: Vec<(&str, f64)> = grid
            .axes
            .iter()
            .zip(&coords)
            .map(|(a, &v)| (a.name.as_str(), v))
            .collect();
        for (n, v) in &grid.fixed {
            named.push((n.as_str(), *v));
        }
        let value = match &model.kind {
            TrendKind::HierarchicalLogQuad { .. } => {
                let cond = CondKey {
                    temperature_k: coord("temperature", &named)?,
                    pressure_mpa: coord("pressure", &named)?,
                };
                model.eval_hierarchical(
                    coord("t", &named)?,
                    coord("u_prime", &named)?,
                    coord("phi", &named)?,
                    &cond,
                )?
            }
            TrendKind::RadialLinear { .. } => {
                model.eval_radial(coord("r", &named)?, coord("u_prime", &named)?)?
            }
            TrendKind::PressureLinear { .. } => {
                model.eval_pressure(coord("t", &named)?, coord("pressure", &named)?)?
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite { stage: "lofi grid evaluation", iteration: idx });
        }
        values.push(value);
    }

    Ok(LofiGrid { values, ..grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn recovers_exact_log_quadratic_from_three_points() {
        let truth = LogQuadCoeffs { c0: 1.0, c1: 2.0, c2: 0.5 };
        let times = [0.01, 0.1, 1.0];
        let values: Vec<f64> = times
            .iter()
            .map(|&t| eval_log_quadratic(&truth, t).unwrap())
            .collect();
        let fit = fit_log_quadratic(&times, &values).unwrap();
        assert!((fit.coeffs.c0 - 1.0).abs() < 1e-10);
        assert!((fit.coeffs.c1 - 2.0).abs() < 1e-10);
        assert!((fit.coeffs.c2 - 0.5).abs() < 1e-10);
    }

    #[test]
    fn constant_values_fit_as_pure_intercept() {
        let times = [0.01, 0.02, 0.05, 0.1, 0.2];
        let values = [5.0; 5];
        let fit = fit_log_quadratic(&times, &values).unwrap();
        assert!((fit.coeffs.c0 - 5.0_f64.ln()).abs() < 1e-10);
        assert!(fit.coeffs.c1.abs() < 1e-10);
        assert!(fit.coeffs.c2.abs() < 1e-10);
    }

    #[test]
    fn noisy_fit_matches_normal_equations_oracle() {
        // Independent oracle: explicit 3x3 normal equations solved by
        // Cramer's rule on (ln t, ln y).
        let n = 50;
        let times: Vec<f64> = (0..n).map(|i| 0.005 + 0.001 * i as f64).collect();
        let values: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let lt = t.ln();
                let noise = 0.02 * (((i * 31 + 7) % 17) as f64 / 17.0 - 0.5);
                (0.4 + 1.3 * lt + 0.08 * lt * lt + noise).exp()
            })
            .collect();

        let (mut s0, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
        for (&t, &y) in times.iter().zip(&values) {
            let x = t.ln();
            let z = y.ln();
            s0 += 1.0;
            s1 += x;
            s2 += x * x;
            s3 += x * x * x;
            s4 += x * x * x * x;
            b0 += z;
            b1 += x * z;
            b2 += x * x * z;
        }
        let det3 = |m: [[f64; 3]; 3]| -> f64 {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let a = [[s0, s1, s2], [s1, s2, s3], [s2, s3, s4]];
        let d = det3(a);
        let dx = det3([[b0, s1, s2], [b1, s2, s3], [b2, s3, s4]]);
        let dy = det3([[s0, b0, s2], [s1, b1, s3], [s2, b2, s4]]);
        let dz = det3([[s0, s1, b0], [s1, s2, b1], [s2, s3, b2]]);
        let oracle = [dx / d, dy / d, dz / d];

        let fit = fit_log_quadratic(&times, &values).unwrap();
        assert!((fit.coeffs.c0 - oracle[0]).abs() < 1e-8);
        assert!((fit.coeffs.c1 - oracle[1]).abs() < 1e-8);
        assert!((fit.coeffs.c2 - oracle[2]).abs() < 1e-8);
    }

    #[test]
    fn log_quadratic_rejects_bad_inputs() {
        assert!(fit_log_quadratic(&[0.1, 0.2], &[1.0, 2.0]).is_err());
        assert!(fit_log_quadratic(&[-0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_log_quadratic(&[0.1, 0.2, 0.3], &[1.0, -2.0, 3.0]).is_err());
        assert!(fit_log_quadratic(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]).is_err());
        assert!(eval_log_quadratic(&LogQuadCoeffs { c0: 0.0, c1: 0.0, c2: 0.0 }, 0.0).is_err());
    }

    #[test]
    fn eval_log_quadratic_known_values() {
        let zero = LogQuadCoeffs { c0: 0.0, c1: 0.0, c2: 0.0 };
        assert_eq!(eval_log_quadratic(&zero, 0.37).unwrap(), 1.0);

        let power = LogQuadCoeffs { c0: 0.0, c1: 1.0, c2: 0.0 };
        assert!((eval_log_quadratic(&power, E).unwrap() - E).abs() < 1e-12);

        // Direct single-line evaluation as the oracle.
        let c = LogQuadCoeffs { c0: 1.0, c1: 2.0, c2: 0.5 };
        let t: f64 = 0.1;
        let expected = (1.0 + 2.0 * t.ln() + 0.5 * t.ln() * t.ln()).exp();
        assert!((expected - 0.3851).abs() < 1e-4);
        assert!((eval_log_quadratic(&c, t).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_surface_has_vanishing_higher_terms() {
        let points: Vec<(f64, f64, f64)> = [0.3, 0.6, 0.9, 1.2, 1.5, 0.45]
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, 0.6 + 0.1 * (i % 3) as f64, 4.2))
            .collect();
        let s = fit_coeff_surface(&points, Basis::Quad2d).unwrap();
        for (term, c) in s.terms.iter().zip(&s.coeffs) {
            if term.u_pow == 0 && term.phi_pow == 0 {
                assert!((c - 4.2).abs() < 1e-10);
            } else {
                assert!(c.abs() < 1e-10, "term {term:?} should vanish, got {c}");
            }
        }
    }

    #[test]
    fn plane_recovered_exactly_from_six_points() {
        let pts: Vec<(f64, f64, f64)> = [
            (0.3, 0.6),
            (0.6, 0.7),
            (0.9, 0.6),
            (1.2, 0.8),
            (1.5, 0.7),
            (0.45, 0.9),
        ]
        .iter()
        .map(|&(u, phi)| (u, phi, 2.0 + 3.0 * u - phi))
        .collect();
        let s = fit_coeff_surface(&pts, Basis::Quad2d).unwrap();
        for &(u, phi, v) in &pts {
            assert!((s.eval(u, phi) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cubic_in_u_matches_least_squares_oracle() {
        // phi held constant, so the quad2d term set is {1, u, u^2}; the
        // oracle solves the same 3x3 normal equations by Cramer's rule.
        let us: Vec<f64> = (0..8).map(|i| 0.2 + 0.2 * i as f64).collect();
        let pts: Vec<(f64, f64, f64)> = us
            .iter()
            .map(|&u| (u, 0.5, 1.0 - 0.4 * u + 0.3 * u * u + 0.25 * u * u * u))
            .collect();
        let s = fit_coeff_surface(&pts, Basis::Quad2d).unwrap();
        assert_eq!(s.terms.len(), 3);

        let (mut s0, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
        for &(u, _, v) in &pts {
            s0 += 1.0;
            s1 += u;
            s2 += u * u;
            s3 += u * u * u;
            s4 += u * u * u * u;
            b0 += v;
            b1 += u * v;
            b2 += u * u * v;
        }
        let det3 = |m: [[f64; 3]; 3]| -> f64 {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let a = [[s0, s1, s2], [s1, s2, s3], [s2, s3, s4]];
        let d = det3(a);
        let oracle = [
            det3([[b0, s1, s2], [b1, s2, s3], [b2, s3, s4]]) / d,
            det3([[s0, b0, s2], [s1, b1, s3], [s2, b2, s4]]) / d,
            det3([[s0, s1, b0], [s1, s2, b1], [s2, s3, b2]]) / d,
        ];
        for (c, o) in s.coeffs.iter().zip(&oracle) {
            assert!((c - o).abs() < 1e-8, "coeff {c} vs oracle {o}");
        }
    }

    #[test]
    fn degenerate_points_downgrade_basis() {
        // All levels identical: only a constant is identifiable.
        let pts = vec![(0.5, 0.7, 3.0), (0.5, 0.7, 3.2), (0.5, 0.7, 2.8)];
        let s = fit_coeff_surface(&pts, Basis::Quad2d).unwrap();
        assert!(s.downgraded);
        assert_eq!(s.terms.len(), 1);
        assert!((s.coeffs[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn thermo_single_reference_case_is_zero() {
        let base = [
            CoeffSurface::constant(1.0),
            CoeffSurface::constant(2.0),
            CoeffSurface::constant(0.1),
        ];
        let refk = CondKey { temperature_k: 300.0, pressure_mpa: 0.1 };
        let cases = vec![CaseCoeffs {
            condition: refk,
            levels: vec![(0.5, 0.7, LogQuadCoeffs { c0: 1.1, c1: 2.2, c2: 0.2 })],
        }];
        let tc = fit_thermo_correction(&base, &cases, refk).unwrap();
        assert_eq!(tc.offset_for(&refk).unwrap(), [0.0; 3]);
    }

    #[test]
    fn thermo_recovers_constructed_uniform_offset() {
        let base = [
            CoeffSurface::constant(1.0),
            CoeffSurface::constant(2.0),
            CoeffSurface::constant(0.1),
        ];
        let refk = CondKey { temperature_k: 300.0, pressure_mpa: 0.1 };
        let other = CondKey { temperature_k: 365.0, pressure_mpa: 0.5 };
        let cases = vec![CaseCoeffs {
            condition: other,
            levels: vec![
                (0.3, 0.7, LogQuadCoeffs { c0: 1.3, c1: 2.3, c2: 0.4 }),
                (0.9, 0.7, LogQuadCoeffs { c0: 1.3, c1: 2.3, c2: 0.4 }),
            ],
        }];
        let tc = fit_thermo_correction(&base, &cases, refk).unwrap();
        let d = tc.offset_for(&other).unwrap();
        for v in d {
            assert!((v - 0.3).abs() < 1e-10);
        }
    }

    #[test]
    fn thermo_recovers_three_injected_offsets() {
        // Base surfaces linear in u'; three conditions shifted by known
        // deltas {0, 0.2, -0.1} in every coefficient.
        let us = [0.3, 0.6, 0.9, 1.2];
        let base_fns: [&dyn Fn(f64) -> f64; 3] = [
            &|u: f64| 0.5 + 0.2 * u,
            &|u: f64| 1.5 - 0.1 * u,
            &|u: f64| 0.05 + 0.01 * u,
        ];
        let mut base_surfaces = Vec::new();
        for f in &base_fns {
            let pts: Vec<(f64, f64, f64)> = us.iter().map(|&u| (u, 0.7, f(u))).collect();
            base_surfaces.push(fit_coeff_surface(&pts, Basis::Quad2d).unwrap());
        }
        let base: [CoeffSurface; 3] = [
            base_surfaces[0].clone(),
            base_surfaces[1].clone(),
            base_surfaces[2].clone(),
        ];

        let keys = [
            CondKey { temperature_k: 300.0, pressure_mpa: 0.1 },
            CondKey { temperature_k: 365.0, pressure_mpa: 0.1 },
            CondKey { temperature_k: 365.0, pressure_mpa: 0.5 },
        ];
        let deltas = [0.0, 0.2, -0.1];
        let cases: Vec<CaseCoeffs> = keys
            .iter()
            .zip(&deltas)
            .map(|(&k, &d)| CaseCoeffs {
                condition: k,
                levels: us
                    .iter()
                    .map(|&u| {
                        (
                            u,
                            0.7,
                            LogQuadCoeffs {
                                c0: base_fns[0](u) + d,
                                c1: base_fns[1](u) + d,
                                c2: base_fns[2](u) + d,
                            },
                        )
                    })
                    .collect(),
            })
            .collect();

        let tc = fit_thermo_correction(&base, &cases, keys[0]).unwrap();
        for (k, expected) in keys.iter().zip(&deltas) {
            let d = tc.offset_for(k).unwrap();
            for v in d {
                assert!(
                    (v - expected).abs() < 1e-9,
                    "offset {v} vs injected {expected}"
                );
            }
        }
    }

    #[test]
    fn linear_trend_examples() {
        let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 4.0 * v + 1.0).collect();
        let (a, b) = fit_linear_trend(&x, &y).unwrap();
        assert!((a - 4.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);

        let y7 = vec![7.0; 5];
        let (a, b) = fit_linear_trend(&x, &y7).unwrap();
        assert!(a.abs() < 1e-12 && (b - 7.0).abs() < 1e-12);

        assert!(fit_linear_trend(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn noisy_linear_trend_matches_closed_form() {
        let n = 100;
        let x: Vec<f64> = (0..n).map(|i| 0.01 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| -1.5 * v + 0.25 + 0.01 * (((i * 13 + 5) % 23) as f64 / 23.0 - 0.5))
            .collect();
        let (a, b) = fit_linear_trend(&x, &y).unwrap();

        // Closed-form OLS slope/intercept.
        let nf = n as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(u, v)| u * v).sum();
        let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
        let intercept = (sy - slope * sx) / nf;
        assert!((a - slope).abs() < 1e-10);
        assert!((b - intercept).abs() < 1e-10);
    }

    fn hierarchical_fixture() -> TrendModel {
        let us = [0.3, 0.6, 0.9, 1.2, 1.5];
        let a0 = |u: f64| -2.0 + 0.5 * u - 0.05 * u * u;
        let a1 = |u: f64| 1.1 + 0.1 * u;
        let a2 = |_: f64| 0.05;
        let mk = |f: &dyn Fn(f64) -> f64| {
            let pts: Vec<(f64, f64, f64)> = us.iter().map(|&u| (u, 1.0, f(u))).collect();
            fit_coeff_surface(&pts, Basis::Quad2d).unwrap()
        };
        let base = [mk(&a0), mk(&a1), mk(&a2)];
        let refk = CondKey { temperature_k: 300.0, pressure_mpa: 0.1 };
        TrendModel {
            version: TREND_MODEL_VERSION,
            name: "fixture".into(),
            target: "a3d_m2".into(),
            kind: TrendKind::HierarchicalLogQuad {
                base,
                thermo: ThermoCorrection::none(refk),
            },
            validity: vec![
                AxisRange { name: "t".into(), min: 0.005, max: 0.05 },
                AxisRange { name: "u_prime".into(), min: 0.3, max: 1.5 },
            ],
            provenance: "unit test".into(),
        }
    }

    #[test]
    fn single_node_grid_equals_direct_evaluation() {
        let model = hierarchical_fixture();
        let cond = CondKey { temperature_k: 300.0, pressure_mpa: 0.1 };
        let grid = build_lofi_grid(
            &model,
            vec![
                GridAxis::new("t", vec![0.02]),
                GridAxis::new("u_prime", vec![0.9]),
            ],
            vec![
                ("phi".into(), 1.0),
                ("temperature".into(), 300.0),
                ("pressure".into(), 0.1),
            ],
        )
        .unwrap();
        assert_eq!(grid.len(), 1);
        let direct = model.eval_hierarchical(0.02, 0.9, 1.0, &cond).unwrap();
        assert_eq!(grid.values[0], direct);
    }

    #[test]
    fn grid_positive_and_monotone_for_rising_trend() {
        // d/dt log y = (c1 + 2 c2 ln t)/t; with c1 = 1.1..1.25 and
        // c2 = 0.05, c1 + 2 c2 ln t > 1.1 - 0.1*5.3 > 0 on [0.005, 0.05],
        // so the trend strictly increases there.
        let model = hierarchical_fixture();
        let grid = build_lofi_grid(
            &model,
            vec![GridAxis::linspace("t", 0.005, 0.05, 80)],
            vec![
                ("u_prime".into(), 0.9),
                ("phi".into(), 1.0),
                ("temperature".into(), 300.0),
                ("pressure".into(), 0.1),
            ],
        )
        .unwrap();
        assert!(grid.values.iter().all(|&v| v > 0.0));
        for w in grid.values.windows(2) {
            assert!(w[1] > w[0], "grid not monotone: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn pressure_sweep_interpolates_between_fitted_levels() {
        // Lines fitted at 0.1, 0.3, 0.7, 1.0 MPa; at the held-out
        // 0.5 MPa the slope must equal the linear interpolant of the
        // 0.3 and 0.7 MPa fits.
        let t: Vec<f64> = (0..20).map(|i| 0.001 * i as f64).collect();
        let slope_of = |p: f64| 1.2 - 0.6 * p;
        let series: Vec<(f64, Vec<f64>, Vec<f64>)> = [0.1, 0.3, 0.7, 1.0]
            .iter()
            .map(|&p| {
                let r: Vec<f64> = t.iter().map(|&tt| slope_of(p) * tt + 0.002).collect();
                (p, t.clone(), r)
            })
            .collect();
        let (ps, slopes, intercepts) = fit_pressure_linear(&series).unwrap();
        let model = TrendModel {
            version: TREND_MODEL_VERSION,
            name: "sweep".into(),
            target: "r_m".into(),
            kind: TrendKind::PressureLinear {
                pressures_mpa: ps.clone(),
                slopes: slopes.clone(),
                intercepts,
            },
            validity: vec![AxisRange { name: "pressure".into(), min: 0.1, max: 1.0 }],
            provenance: "unit test".into(),
        };
        let (a_mid, _) = model.pressure_line(0.5).unwrap();
        let expected = slopes[1] + (slopes[2] - slopes[1]) * (0.5 - 0.3) / (0.7 - 0.3);
        assert!((a_mid - expected).abs() < 1e-12);
        // Here the ground-truth slope is itself linear in P.
        assert!((a_mid - slope_of(0.5)).abs() < 1e-9);
    }

    #[test]
    fn grid_outside_hull_warns_but_evaluates() {
        let model = hierarchical_fixture();
        let grid = build_lofi_grid(
            &model,
            vec![
                GridAxis::linspace("t", 0.005, 0.05, 5),
                GridAxis::linspace("u_prime", 0.3, 2.5, 5),
            ],
            vec![
                ("phi".into(), 1.0),
                ("temperature".into(), 300.0),
                ("pressure".into(), 0.1),
            ],
        )
        .unwrap();
        assert_eq!(grid.warnings.len(), 1);
        assert!(grid.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn hierarchical_consistency_at_reference() {
        // With delta = 0 at the reference, the full model equals the base
        // surface composition exactly.
        let model = hierarchical_fixture();
        let cond = CondKey { temperature_k: 300.0, pressure_mpa: 0.1 };
        if let TrendKind::HierarchicalLogQuad { base, .. } = &model.kind {
            for &u in &[0.3, 0.75, 1.5] {
                for &t in &[0.006, 0.02, 0.049] {
                    let full = model.eval_hierarchical(t, u, 1.0, &cond).unwrap();
                    let lt: f64 = t.ln();
                    let direct = (base[0].eval(u, 1.0)
                        + base[1].eval(u, 1.0) * lt
                        + base[2].eval(u, 1.0) * lt * lt)
                        .exp();
                    assert_eq!(full, direct);
                }
            }
        } else {
            unreachable!()
        }
    }

    #[test]
    fn trend_model_json_roundtrip() {
        let model = hierarchical_fixture();
        let text = model.to_json();
        let back = TrendModel::from_json(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn grid_csv_roundtrip_is_lossless() {
        let model = hierarchical_fixture();
        let grid = build_lofi_grid(
            &model,
            vec![
                GridAxis::linspace("t", 0.007, 0.043, 7),
                GridAxis::linspace("u_prime", 0.3, 1.5, 5),
            ],
            vec![
                ("phi".into(), 1.0),
                ("temperature".into(), 300.0),
                ("pressure".into(), 0.1),
            ],
        )
        .unwrap();
        let back = LofiGrid::from_csv(&grid.to_csv()).unwrap();
        assert_eq!(back.values, grid.values);
        assert_eq!(back.axes, grid.axes);
        assert_eq!(back.fixed, grid.fixed);
        assert_eq!(back.provenance, grid.provenance);
    }

    #[test]
    fn exact_recovery_of_in_span_synthetic_data() {
        // Data generated noiselessly from quadratic-in-u' coefficient
        // functions must be recovered to 1e-8 through the whole pipeline:
        // per-level temporal fits, then coefficient surfaces.
        let us = [0.3, 0.6, 0.9, 1.2, 1.5];
        let times: Vec<f64> = (0..25).map(|i| 0.008 + 0.0017 * i as f64).collect();
        let a0 = |u: f64| -2.0 + 0.5 * u - 0.05 * u * u;
        let a1 = |u: f64| 1.1 + 0.1 * u;
        let a2 = |u: f64| 0.05 - 0.02 * u;

        let mut pts = [Vec::new(), Vec::new(), Vec::new()];
        for &u in &us {
            let truth = LogQuadCoeffs { c0: a0(u), c1: a1(u), c2: a2(u) };
            let values: Vec<f64> = times
                .iter()
                .map(|&t| eval_log_quadratic(&truth, t).unwrap())
                .collect();
            let fit = fit_log_quadratic(&times, &values).unwrap();
            pts[0].push((u, 1.0, fit.coeffs.c0));
            pts[1].push((u, 1.0, fit.coeffs.c1));
            pts[2].push((u, 1.0, fit.coeffs.c2));
        }
        let surfaces: Vec<CoeffSurface> = pts
            .iter()
            .map(|p| fit_coeff_surface(p, Basis::Quad2d).unwrap())
            .collect();
        for &u in &[0.3, 0.45, 1.0, 1.5] {
            assert!((surfaces[0].eval(u, 1.0) - a0(u)).abs() < 1e-8);
            assert!((surfaces[1].eval(u, 1.0) - a1(u)).abs() < 1e-8);
            assert!((surfaces[2].eval(u, 1.0) - a2(u)).abs() < 1e-8);
        }
    }
}
