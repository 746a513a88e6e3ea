//! Canonical dataset manifest: written by `synth` and `ingest`, consumed
//! by `fit-lofi`, `train` and `evaluate`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mufinn::dataset::{CaseCondition, FlameTrace, Fuel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub case_id: String,
    pub fuel: String,
    pub phi: f64,
    pub temperature_k: f64,
    /// Case-wide pressure; sweep levels override it per level.
    pub pressure_mpa: f64,
    /// `flame_trace` or `burning_curve`.
    pub data_format: String,
    /// Observable the dataset targets (`a3d_m2`, `r3d_m`, `utm_mps`).
    pub target: String,
    pub level: Vec<LevelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    #[serde(default)]
    pub u_prime_mps: Option<f64>,
    #[serde(default)]
    pub pressure_mpa: Option<f64>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Manifest> {
        let path = dir.join("manifest.toml");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading dataset manifest {}", path.display()))?;
        let m: Manifest =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if m.level.is_empty() {
            bail!("{}: manifest declares no levels", path.display());
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let text = toml::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }

    pub fn fuel(&self) -> anyhow::Result<Fuel> {
        match self.fuel.as_str() {
            "CH4" => Ok(Fuel::Ch4),
            "H2" => Ok(Fuel::H2),
            other => bail!("unknown fuel `{other}`"),
        }
    }

    /// The masked-axis coordinate of a level (u' or pressure).
    pub fn level_value(&self, entry: &LevelEntry) -> f64 {
        entry
            .u_prime_mps
            .or(entry.pressure_mpa)
            .unwrap_or(self.pressure_mpa)
    }

    pub fn condition_for(&self, entry: &LevelEntry) -> anyhow::Result<CaseCondition> {
        Ok(CaseCondition {
            fuel: self.fuel()?,
            case_id: self.case_id.clone(),
            phi: self.phi,
            temperature_k: self.temperature_k,
            pressure_mpa: entry.pressure_mpa.unwrap_or(self.pressure_mpa),
            u_prime_mps: entry.u_prime_mps.unwrap_or(0.0),
        })
    }

    pub fn level_files(&self, dir: &Path, entry: &LevelEntry) -> Vec<PathBuf> {
        entry.files.iter().map(|f| dir.join(f)).collect()
    }

    /// Load and validate every replicate trace of one level.
    pub fn load_level_traces(
        &self,
        dir: &Path,
        entry: &LevelEntry,
    ) -> anyhow::Result<Vec<FlameTrace>> {
        let condition = self.condition_for(entry)?;
        let files = self.level_files(dir, entry);
        mufinn::dataset::ingest_traces(&files, &condition)
            .map_err(|e| anyhow::anyhow!("level {}: {e}", self.level_value(entry)))
    }
}
