//! Run configuration: one TOML file per run, every field defaulted,
//! unknown keys rejected so typos never pass silently.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use mufinn::dataset::{HoldoutPurpose, HoldoutSpec, MaskAxis};
use mufinn::model::CompoundLossConfig;
use mufinn::optim::{AdamConfig, LbfgsConfig, LineSearch};
use mufinn::signal::{PipelineConfig, SgConfig};

/// Environment variable that re-roots relative output directories.
pub const OUT_ROOT_ENV: &str = "MUFINN_OUT_ROOT";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; relative paths are resolved under
    /// `$MUFINN_OUT_ROOT` when that variable is set.
    pub out_dir: Option<PathBuf>,
    pub case: CaseSection,
    pub lofi: LofiSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub adam: AdamSection,
    pub lbfgs: LbfgsSection,
    pub holdout: HoldoutSection,
    pub signal: SignalSection,
    pub synth: SynthSection,
    pub bench: BenchSection,
    /// SHA-256 of the loaded config file, recorded in model provenance.
    #[serde(skip)]
    pub config_digest: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.config_digest = Some(mufinn::digest_hex(text.as_bytes()));
        Ok(cfg)
    }

    /// Provenance string carried by trained artifacts.
    pub fn provenance(&self, what: &str) -> String {
        match &self.config_digest {
            Some(d) => format!("{what}; seed {}; config sha256 {d}", self.seed),
            None => format!("{what}; seed {}; default config", self.seed),
        }
    }

    /// Output directory after the `--out` flag and env-root override.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        let dir = flag
            .map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs/out"));
        if dir.is_relative() {
            if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
                return PathBuf::from(root).join(dir);
            }
        }
        dir
    }

    pub fn adam_config(&self) -> AdamConfig {
        let max_iters = self.adam.max_iters;
        AdamConfig {
            lr_max: self.adam.lr_max,
            warmup_iters: self.adam.warmup_iters.unwrap_or(max_iters / 20),
            max_iters,
            beta1: self.adam.beta1,
            beta2: self.adam.beta2,
            epsilon: self.adam.epsilon,
            clip_norm: self.adam.clip_norm,
            plateau_window: self.adam.plateau_window,
            plateau_tol: self.adam.plateau_tol,
        }
    }

    pub fn lbfgs_config(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iters: self.lbfgs.max_iters,
            history_size: self.lbfgs.history_size,
            grad_tol: self.lbfgs.grad_tol,
            line_search: LineSearch::StrongWolfe,
        }
    }

    pub fn loss_config(&self) -> CompoundLossConfig {
        CompoundLossConfig {
            lambda_lf: self.loss.lambda_lf,
            lambda_hf_nl: self.loss.lambda_hf_nl,
        }
    }

    pub fn holdout_spec(&self) -> anyhow::Result<HoldoutSpec> {
        let axis = match self.holdout.axis.as_str() {
            "u_prime" => MaskAxis::UPrime,
            "pressure" => MaskAxis::Pressure,
            "case" => MaskAxis::Case,
            other => bail!("unknown holdout axis `{other}` (u_prime | pressure | case)"),
        };
        let purpose = match self.holdout.purpose.as_str() {
            "interpolation" => HoldoutPurpose::Interpolation,
            "extrapolation" => HoldoutPurpose::Extrapolation,
            "mixed" => HoldoutPurpose::Mixed,
            "unseen_case" => HoldoutPurpose::UnseenCase,
            other => bail!(
                "unknown holdout purpose `{other}` (interpolation | extrapolation | mixed | unseen_case)"
            ),
        };
        Ok(HoldoutSpec {
            axis,
            masked_levels: self.holdout.masked.clone(),
            masked_cases: self.holdout.masked_cases.clone(),
            purpose,
        })
    }

    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let s = &self.signal;
        Ok(PipelineConfig {
            stage1: SgConfig::new(s.stage1_window, s.stage1_order)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
            downsample: s.downsample,
            stage2: SgConfig::new(s.stage2_window, s.stage2_order)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
            eps_frac: s.eps_frac,
            r_window: s.r_window.map(|[lo, hi]| (lo, hi)),
            pf_override: s.pf_override,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseSection {
    /// `flame` (area/radius traces over u'), `pressure_radius`
    /// (radius traces over a pressure sweep), `pressure_utm`
    /// (burning-velocity curves from pressure traces, over u'), or
    /// `forrester` (the analytic benchmark, train command only).
    pub kind: String,
    /// Canonical dataset directory holding `manifest.toml`.
    pub dataset_dir: Option<PathBuf>,
    /// Multiple canonical dataset directories, one per operating case,
    /// for the hierarchical multi-case workflow. Takes precedence over
    /// `dataset_dir` when non-empty; the training inputs then carry the
    /// full `(t, u', phi, T, P)` coordinates.
    pub dataset_dirs: Vec<PathBuf>,
    /// Raw inputs consumed by `ingest`.
    pub input_dir: Option<PathBuf>,
    /// Optional custom case registry; the built-in one is used otherwise.
    pub registry: Option<PathBuf>,
    /// Which observable the models are trained on.
    pub target: String,
    /// Inputs CSV for the `predict` command (one row per point, feature
    /// columns first); a grid over the normalization hull otherwise.
    pub predict_inputs: Option<PathBuf>,
}

impl Default for CaseSection {
    fn default() -> Self {
        CaseSection {
            kind: "flame".into(),
            dataset_dir: None,
            dataset_dirs: Vec::new(),
            input_dir: None,
            registry: None,
            target: "a3d_m2".into(),
            predict_inputs: None,
        }
    }
}

impl CaseSection {
    /// Every dataset directory of the run, single- or multi-case.
    pub fn all_dataset_dirs(&self) -> anyhow::Result<Vec<PathBuf>> {
        if !self.dataset_dirs.is_empty() {
            return Ok(self.dataset_dirs.clone());
        }
        self.dataset_dir
            .clone()
            .map(|d| vec![d])
            .ok_or_else(|| anyhow::anyhow!("[case] dataset_dir (or dataset_dirs) is required"))
    }

    pub fn is_multi_case(&self) -> bool {
        self.dataset_dirs.len() > 1
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LofiSection {
    /// `quad2d` or `linear` coefficient-surface basis.
    pub basis: String,
    /// Grid resolution per continuous axis.
    pub grid_points: usize,
    /// Reference condition for the thermodynamic correction, as
    /// `[temperature_k, pressure_mpa]`; defaults to the first case.
    pub reference: Option<[f64; 2]>,
}

impl Default for LofiSection {
    fn default() -> Self {
        LofiSection { basis: "quad2d".into(), grid_points: 50, reference: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lf_hidden: Vec<usize>,
    pub nl_hidden: Vec<usize>,
    pub nl_enabled: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { lf_hidden: vec![20, 20], nl_hidden: vec![10, 10], nl_enabled: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub lambda_lf: f64,
    pub lambda_hf_nl: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { lambda_lf: 1e-5, lambda_hf_nl: 1e-5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub lr_max: f64,
    pub max_iters: usize,
    /// Defaults to 5% of `max_iters`.
    pub warmup_iters: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        AdamSection {
            lr_max: 1e-3,
            max_iters: 2000,
            warmup_iters: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            plateau_window: 500,
            plateau_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsSection {
    pub max_iters: usize,
    pub history_size: usize,
    pub grad_tol: f64,
}

impl Default for LbfgsSection {
    fn default() -> Self {
        LbfgsSection { max_iters: 500, history_size: 20, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoldoutSection {
    pub axis: String,
    /// Masked levels (u' in m/s or pressure in MPa).
    pub masked: Vec<f64>,
    /// Masked case labels, for the `case` axis.
    pub masked_cases: Vec<String>,
    pub purpose: String,
}

impl Default for HoldoutSection {
    fn default() -> Self {
        HoldoutSection {
            axis: "u_prime".into(),
            masked: vec![],
            masked_cases: vec![],
            purpose: "interpolation".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub stage1_window: usize,
    pub stage1_order: usize,
    pub downsample: usize,
    pub stage2_window: usize,
    pub stage2_order: usize,
    pub eps_frac: f64,
    /// Analysis window `[r_lo, r_hi]` in meters; full range when absent.
    pub r_window: Option<[f64; 2]>,
    pub pf_override: Option<f64>,
}

impl Default for SignalSection {
    fn default() -> Self {
        SignalSection {
            stage1_window: 51,
            stage1_order: 3,
            downsample: 10,
            stage2_window: 11,
            stage2_order: 3,
            eps_frac: 0.02,
            r_window: None,
            pf_override: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// `flame` (area traces over u' levels), `pressure_radius`
    /// (radius traces over a pressure sweep) or `pressure_trace`
    /// (raw chamber-pressure signals for the measurement pipeline).
    pub kind: String,
    pub u_prime_levels: Vec<f64>,
    /// Pressure levels in MPa for the sweep kinds.
    pub pressure_levels: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub noise_std: f64,
    pub replicates: usize,
    pub perturbation_amplitude: f64,
    pub perturbation_freq: f64,
    /// Quadratic-in-u' coefficient laws `[c, c_u, c_uu]` of the
    /// generating trend (log-quadratic family).
    pub trend_a0: [f64; 3],
    pub trend_a1: [f64; 3],
    pub trend_a2: [f64; 3],
    /// Linear-in-phi contribution added to each trend coefficient,
    /// exercised by multi-case generation.
    pub trend_phi: [f64; 3],
    /// Slope/intercept laws `[c, c_p]` in P (MPa) for the sweep kind.
    pub sweep_slope: [f64; 2],
    pub sweep_intercept: [f64; 2],
    pub phi: f64,
    pub temperature_k: f64,
    pub pressure_mpa: f64,
    /// Multi-case generation: one dataset subdirectory per entry, with a
    /// known thermodynamic offset injected into every trend coefficient.
    /// Empty means the single implicit case above.
    pub case: Vec<SynthCase>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCase {
    pub label: String,
    pub phi: f64,
    pub temperature_k: f64,
    pub pressure_mpa: f64,
    #[serde(default)]
    pub delta: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            kind: "flame".into(),
            u_prime_levels: vec![0.3, 0.6, 0.9, 1.2, 1.5],
            pressure_levels: vec![0.1, 0.3, 0.5, 0.7, 1.0],
            t_min: 0.01,
            t_max: 0.05,
            t_points: 40,
            noise_std: 0.02,
            replicates: 3,
            perturbation_amplitude: 0.1,
            perturbation_freq: std::f64::consts::PI / 1.8,
            trend_a0: [-2.0, 0.5, -0.05],
            trend_a1: [1.1, 0.1, 0.0],
            trend_a2: [0.05, 0.0, 0.0],
            trend_phi: [0.0, 0.0, 0.0],
            sweep_slope: [1.2, -0.6],
            sweep_intercept: [0.002, 0.005],
            phi: 1.0,
            temperature_k: 300.0,
            pressure_mpa: 0.1,
            case: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Suites to run: any of `forrester`, `flame_holdout`,
    /// `pressure_sweep`.
    pub suites: Vec<String>,
    /// Optional regularization override applied to every suite.
    pub lambda_override: Option<f64>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            suites: vec![
                "forrester".into(),
                "flame_holdout".into(),
                "pressure_sweep".into(),
            ],
            lambda_override: None,
        }
    }
}
