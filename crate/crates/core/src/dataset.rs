//! Case registry, trace ingestion, replicate averaging, hold-out masking
//! and normalization statistics.
//!
//! Units are fixed at the ingestion boundary: seconds, square meters,
//! meters, MPa, kelvin, m/s.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lofi::levels_match;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Conditions and the case registry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fuel {
    #[serde(rename = "CH4")]
    Ch4,
    #[serde(rename = "H2")]
    H2,
}

impl std::fmt::Display for Fuel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fuel::Ch4 => write!(f, "CH4"),
            Fuel::H2 => write!(f, "H2"),
        }
    }
}

/// Closed interval; scalar entries have `min == max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn scalar(v: f64) -> Self {
        ValueRange { min: v, max: v }
    }

    pub fn is_scalar(&self) -> bool {
        levels_match(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - 1e-12 && v <= self.max + 1e-12
    }
}

/// One registry row: a case with its operating ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub fuel: Fuel,
    pub label: String,
    pub phi: f64,
    pub temperature_k: f64,
    pub pressure_mpa: ValueRange,
    pub u_prime_mps: ValueRange,
}

/// A concrete operating condition of one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCondition {
    pub fuel: Fuel,
    pub case_id: String,
    /// Equivalence ratio.
    pub phi: f64,
    pub temperature_k: f64,
    pub pressure_mpa: f64,
    /// RMS turbulence intensity, m/s; 0 for quiescent cases.
    pub u_prime_mps: f64,
}

impl CaseCondition {
    pub fn validate(&self) -> Result<()> {
        if self.phi <= 0.0 || self.temperature_k <= 0.0 || self.pressure_mpa <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "case {}: phi, T and P must be positive",
                self.case_id
            )));
        }
        if self.u_prime_mps < 0.0 {
            return Err(Error::InvalidInput(format!(
                "case {}: u' must be non-negative",
                self.case_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RangeOrScalar {
    Scalar(f64),
    Range([f64; 2]),
}

impl From<RangeOrScalar> for ValueRange {
    fn from(r: RangeOrScalar) -> Self {
        match r {
            RangeOrScalar::Scalar(v) => ValueRange::scalar(v),
            RangeOrScalar::Range([a, b]) => ValueRange { min: a, max: b },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    fuel: Fuel,
    label: String,
    phi: f64,
    temperature_k: f64,
    pressure_mpa: RangeOrScalar,
    u_prime_mps: RangeOrScalar,
}

/// Parse a registry document (TOML, one `[[case]]` record per row).
/// Malformed rows are rejected with their index.
pub fn load_registry(text: &str) -> Result<Vec<CaseEntry>> {
    let doc: toml::Value = toml::from_str(text)
        .map_err(|e| Error::parse("case registry", e.to_string()))?;
    let Some(cases) = doc.get("case") else {
        return Ok(Vec::new());
    };
    let rows = cases
        .as_array()
        .ok_or_else(|| Error::parse("case registry", "`case` must be an array of tables"))?;
    let mut entries = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let raw: RawCase = row
            .clone()
            .try_into()
            .map_err(|e| Error::parse(format!("case registry row {}", i + 1), e.to_string()))?;
        let entry = CaseEntry {
            fuel: raw.fuel,
            label: raw.label,
            phi: raw.phi,
            temperature_k: raw.temperature_k,
            pressure_mpa: raw.pressure_mpa.into(),
            u_prime_mps: raw.u_prime_mps.into(),
        };
        if entry.phi <= 0.0 || entry.temperature_k <= 0.0 || entry.pressure_mpa.min <= 0.0 {
            return Err(Error::parse(
                format!("case registry row {}", i + 1),
                "phi, T and P must be positive",
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// The built-in registry of investigated cases.
pub fn builtin_registry() -> Vec<CaseEntry> {
    load_registry(include_str!("registry.toml")).expect("built-in registry parses")
}

// ---------------------------------------------------------------------------
// Flame traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlameSample {
    pub t_s: f64,
    pub a3d_m2: f64,
    pub r3d_m: f64,
}

/// One experimental realization: flame surface area and volume-equivalent
/// radius against time, at a fixed condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlameTrace {
    pub condition: CaseCondition,
    pub realization_id: u32,
    pub samples: Vec<FlameSample>,
}

impl FlameTrace {
    pub fn new(
        condition: CaseCondition,
        realization_id: u32,
        samples: Vec<FlameSample>,
    ) -> Result<Self> {
        condition.validate()?;
        if samples.is_empty() {
            return Err(Error::InsufficientData("flame trace has no samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.a3d_m2 <= 0.0 || s.r3d_m <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "row {}: area and radius must be positive",
                    i + 1
                )));
            }
            if !s.t_s.is_finite() || !s.a3d_m2.is_finite() || !s.r3d_m.is_finite() {
                return Err(Error::InvalidInput(format!("row {}: non-finite sample", i + 1)));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_s <= w[0].t_s {
                return Err(Error::InvalidInput(format!(
                    "row {}: time must be strictly increasing",
                    i + 2
                )));
            }
        }
        Ok(FlameTrace { condition, realization_id, samples })
    }

    /// Sample indices whose wrinkling ratio falls below 1 (area smaller
    /// than the equivalent smooth sphere). Flagged, not rejected.
    pub fn suspect_samples(&self) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.a3d_m2 < 4.0 * std::f64::consts::PI * s.r3d_m * s.r3d_m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t_s, self.samples.last().unwrap().t_s)
    }

    /// CSV with header `t_s,A3d_m2,r3d_m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,A3d_m2,r3d_m\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t_s, s.a3d_m2, s.r3d_m);
        }
        out
    }
}

/// Parse a flame-trace CSV. Rows are validated individually and failures
/// name the offending row.
pub fn read_flame_csv(path: &Path) -> Result<Vec<FlameSample>> {
    let text = std::fs::read_to_string(path)?;
    parse_flame_csv(&text, &path.display().to_string())
}

pub fn parse_flame_csv(text: &str, context: &str) -> Result<Vec<FlameSample>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "t_s,A3d_m2,r3d_m" {
        return Err(Error::parse(context, format!("unexpected header `{header}`")));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, counting the header
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::parse(context, format!("row {row}: 3 fields expected")));
        }
        let mut vals = [0.0; 3];
        for (k, part) in parts.iter().enumerate() {
            vals[k] = part
                .trim()
                .parse()
                .map_err(|e| Error::parse(context, format!("row {row}: {e}")))?;
        }
        if let Some(last) = samples.last() {
            let last: &FlameSample = last;
            if vals[0] <= last.t_s {
                return Err(Error::parse(
                    context,
                    format!("row {row}: time must be strictly increasing"),
                ));
            }
        }
        if vals[1] <= 0.0 || vals[2] <= 0.0 {
            return Err(Error::parse(
                context,
                format!("row {row}: area and radius must be positive"),
            ));
        }
        samples.push(FlameSample { t_s: vals[0], a3d_m2: vals[1], r3d_m: vals[2] });
    }
    Ok(samples)
}

/// Ingest replicate files for one condition; the realization id follows
/// file order.
pub fn ingest_traces(files: &[std::path::PathBuf], condition: &CaseCondition) -> Result<Vec<FlameTrace>> {
    if files.is_empty() {
        return Err(Error::InsufficientData("no trace files supplied".into()));
    }
    let mut traces = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let samples = read_flame_csv(file)?;
        traces.push(FlameTrace::new(condition.clone(), i as u32, samples)?);
    }
    Ok(traces)
}

// ---------------------------------------------------------------------------
// Replicate averaging
// ---------------------------------------------------------------------------

fn interp_trace(samples: &[FlameSample], t: f64) -> (f64, f64) {
    // Exact knot hits return stored values bit-for-bit.
    match samples.binary_search_by(|s| s.t_s.partial_cmp(&t).unwrap()) {
        Ok(i) => (samples[i].a3d_m2, samples[i].r3d_m),
        Err(i) => {
            let (lo, hi) = (&samples[i - 1], &samples[i]);
            let w = (t - lo.t_s) / (hi.t_s - lo.t_s);
            (
                lo.a3d_m2 + w * (hi.a3d_m2 - lo.a3d_m2),
                lo.r3d_m + w * (hi.r3d_m - lo.r3d_m),
            )
        }
    }
}

/// Pointwise mean of replicate traces on a common time grid.
///
/// The grid is the union of all replicate sample times restricted to the
/// intersection of their time ranges, which keeps the result independent
/// of replicate order and avoids extrapolating any single replicate.
pub fn replicate_mean(traces: &[FlameTrace]) -> Result<FlameTrace> {
    if traces.is_empty() {
        return Err(Error::InsufficientData("no traces to average".into()));
    }
    let cond = &traces[0].condition;
    for tr in traces.iter().skip(1) {
        if tr.condition != *cond {
            return Err(Error::InvalidInput(
                "replicates must share one operating condition".into(),
            ));
        }
    }

    let lo = traces
        .iter()
        .map(|tr| tr.t_range().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = traces
        .iter()
        .map(|tr| tr.t_range().1)
        .fold(f64::INFINITY, f64::min);
    if lo > hi {
        return Err(Error::InvalidInput(
            "replicate time ranges are disjoint; no common grid exists".into(),
        ));
    }

    let mut grid: Vec<f64> = traces
        .iter()
        .flat_map(|tr| tr.samples.iter().map(|s| s.t_s))
        .filter(|&t| t >= lo && t <= hi)
        .collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let n = traces.len() as f64;
    let samples: Vec<FlameSample> = grid
        .into_iter()
        .map(|t| {
            let (mut a_sum, mut r_sum) = (0.0, 0.0);
            for tr in traces {
                let (a, r) = interp_trace(&tr.samples, t);
                a_sum += a;
                r_sum += r;
            }
            FlameSample { t_s: t, a3d_m2: a_sum / n, r3d_m: r_sum / n }
        })
        .collect();

    FlameTrace::new(cond.clone(), 0, samples)
}

// ---------------------------------------------------------------------------
// Hold-out masking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskAxis {
    UPrime,
    Pressure,
    Case,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutPurpose {
    Interpolation,
    Extrapolation,
    Mixed,
    UnseenCase,
}

/// Declares which condition levels are withheld from training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSpec {
    pub axis: MaskAxis,
    #[serde(default)]
    pub masked_levels: Vec<f64>,
    #[serde(default)]
    pub masked_cases: Vec<String>,
    pub purpose: HoldoutPurpose,
}

impl HoldoutSpec {
    pub fn none() -> Self {
        HoldoutSpec {
            axis: MaskAxis::UPrime,
            masked_levels: Vec::new(),
            masked_cases: Vec::new(),
            purpose: HoldoutPurpose::Interpolation,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.masked_levels.is_empty() && self.masked_cases.is_empty()
    }
}

/// Key of one data item along the masked axis.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskKey {
    Level(f64),
    Case(String),
}

impl MaskKey {
    fn matches_spec(&self, spec: &HoldoutSpec) -> bool {
        match self {
            MaskKey::Level(v) => spec.masked_levels.iter().any(|m| levels_match(*m, *v)),
            MaskKey::Case(c) => spec.masked_cases.iter().any(|m| m == c),
        }
    }
}

/// Partition data into `(train, test)` by the hold-out spec. The split is
/// exhaustive and disjoint; the test side holds exactly the masked levels.
pub fn apply_mask<T, F>(items: Vec<T>, spec: &HoldoutSpec, key_of: F) -> Result<(Vec<T>, Vec<T>)>
where
    F: Fn(&T) -> MaskKey,
{
    // Every masked value must exist in the data, otherwise the mask is
    // inconsistent with the registry.
    for m in &spec.masked_levels {
        let hit = items
            .iter()
            .any(|it| matches!(key_of(it), MaskKey::Level(v) if levels_match(v, *m)));
        if !hit {
            return Err(Error::InvalidInput(format!(
                "masked level {m} not present in the data"
            )));
        }
    }
    for m in &spec.masked_cases {
        let hit = items
            .iter()
            .any(|it| matches!(key_of(it), MaskKey::Case(ref c) if c == m));
        if !hit {
            return Err(Error::InvalidInput(format!(
                "masked case `{m}` not present in the data"
            )));
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for item in items {
        if key_of(&item).matches_spec(spec) {
            test.push(item);
        } else {
            train.push(item);
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "hold-out mask removes all training data".into(),
        ));
    }
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Normalization statistics
// ---------------------------------------------------------------------------

/// Per-feature z-score statistics, population variant. Features with zero
/// variance get their std floored at 1 so normalized values are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: f64,
    pub output_std: f64,
}

impl NormStats {
    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn normalize_output(&self, y: f64) -> f64 {
        (y - self.output_mean) / self.output_std
    }

    pub fn denormalize_output(&self, y: f64) -> f64 {
        y * self.output_std + self.output_mean
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = if var == 0.0 { 1.0 } else { var.sqrt() };
    (mean, std)
}

/// Statistics over the union of the training inputs and targets.
pub fn compute_norm_stats(inputs: &[Vec<f64>], outputs: &[f64]) -> Result<NormStats> {
    if inputs.is_empty() || outputs.is_empty() {
        return Err(Error::InsufficientData("normalization needs data".into()));
    }
    let dim = inputs[0].len();
    for (i, row) in inputs.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Dimension(format!(
                "input row {i} has {} features, expected {dim}",
                row.len()
            )));
        }
    }
    let mut input_mean = Vec::with_capacity(dim);
    let mut input_std = Vec::with_capacity(dim);
    for f in 0..dim {
        let (m, s) = mean_std(inputs.iter().map(move |row| row[f]));
        input_mean.push(m);
        input_std.push(s);
    }
    let (output_mean, output_std) = mean_std(outputs.iter().copied());
    Ok(NormStats { input_mean, input_std, output_mean, output_std })
}
