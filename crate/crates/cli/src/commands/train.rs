//! Train the multi-fidelity model: hold-out mask, low-fidelity grid,
//! joint two-stage optimization, per-split summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use mufinn::dataset::{apply_mask, compute_norm_stats, replicate_mean, MaskKey};
use mufinn::lofi::{build_lofi_grid, GridAxis, TrendKind, TrendModel};
use mufinn::model::{train, FitData, MufinnConfig, MufinnModel};
use mufinn::signal::BurningCurve;
use mufinn::synth::{evaluate_rmse, forrester_pair};

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::ensure_dir;

/// One condition level's regression data, tagged for the split summary.
pub struct LevelData {
    pub case_id: String,
    pub level: f64,
    pub phi: f64,
    pub temperature_k: f64,
    pub pressure_mpa: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub is_test: bool,
}

impl LevelData {
    pub fn mask_key(&self, spec: &mufinn::dataset::HoldoutSpec) -> MaskKey {
        match spec.axis {
            mufinn::dataset::MaskAxis::Case => MaskKey::Case(self.case_id.clone()),
            _ => MaskKey::Level(self.level),
        }
    }
}

pub fn run(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    ensure_dir(out_dir)?;
    if cfg.case.kind == "forrester" {
        return train_forrester(cfg, out_dir);
    }

    let (levels, model, report_csv, summary) = train_dataset(cfg, out_dir)?;
    let _ = levels;
    model.save(&out_dir.join("model.json")).map_err(anyhow::Error::from)?;
    std::fs::write(out_dir.join("loss_history.csv"), report_csv)?;
    std::fs::write(out_dir.join("rmse_summary.csv"), &summary)?;
    println!("{summary}");
    println!("train: model digest {}", model.digest());
    Ok(())
}

/// The analytic benchmark route: 21 low-fidelity samples plus 4
/// high-fidelity anchors, test RMSE against the true function.
fn train_forrester(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    let lf_xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
    let hf_xs = [0.0, 0.4, 0.6, 1.0];
    let lf = FitData::new(
        lf_xs.iter().map(|&x| vec![x]).collect(),
        lf_xs.iter().map(|&x| forrester_pair(x).0).collect(),
    )
    .map_err(anyhow::Error::from)?;
    let hf = FitData::new(
        hf_xs.iter().map(|&x| vec![x]).collect(),
        hf_xs.iter().map(|&x| forrester_pair(x).1).collect(),
    )
    .map_err(anyhow::Error::from)?;

    let norm = compute_norm_stats(
        &[lf.inputs.clone(), hf.inputs.clone()].concat(),
        &[lf.targets.clone(), hf.targets.clone()].concat(),
    )
    .map_err(anyhow::Error::from)?;
    let model0 = MufinnModel::init(
        &MufinnConfig {
            input_dim: 1,
            lf_hidden: cfg.model.lf_hidden.clone(),
            nl_hidden: cfg.model.nl_hidden.clone(),
            nl_enabled: cfg.model.nl_enabled,
            seed: cfg.seed,
        },
        norm.clone(),
        cfg.provenance("forrester benchmark"),
    )
    .map_err(anyhow::Error::from)?;
    let (model, report) = train(
        &model0,
        &lf,
        &hf,
        &cfg.loss_config(),
        &cfg.adam_config(),
        &cfg.lbfgs_config(),
    )
    .map_err(anyhow::Error::from)?;

    let test_xs: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    let pred = model
        .predict(&test_xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
        .map_err(anyhow::Error::from)?;
    let truth: Vec<f64> = test_xs.iter().map(|&x| forrester_pair(x).1).collect();
    let rmse = evaluate_rmse(&pred, &truth).map_err(anyhow::Error::from)? / norm.output_std;

    model.save(&out_dir.join("model.json")).map_err(anyhow::Error::from)?;
    std::fs::write(out_dir.join("loss_history.csv"), report.history_csv())?;
    std::fs::write(
        out_dir.join("rmse_summary.csv"),
        format!("split,rmse_normalized\ntest,{rmse}\n"),
    )?;
    println!("train: forrester normalized test RMSE = {rmse:.5}");
    println!("train: model digest {}", model.digest());
    Ok(())
}

/// Assemble per-level data from the canonical dataset.
pub fn load_level_data(
    cfg: &RunConfig,
    dataset_dir: &Path,
    manifest: &Manifest,
) -> anyhow::Result<Vec<LevelData>> {
    let mut out = Vec::new();
    match manifest.data_format.as_str() {
        "flame_trace" => {
            for entry in &manifest.level {
                let traces = manifest.load_level_traces(dataset_dir, entry)?;
                let mean = replicate_mean(&traces).map_err(anyhow::Error::from)?;
                let level = manifest.level_value(entry);
                let coord = match cfg.case.kind.as_str() {
                    "pressure_radius" => entry.pressure_mpa.unwrap_or(manifest.pressure_mpa),
                    _ => entry.u_prime_mps.unwrap_or(0.0),
                };
                let inputs: Vec<Vec<f64>> =
                    mean.samples.iter().map(|s| vec![s.t_s, coord]).collect();
                let targets: Vec<f64> = match cfg.case.target.as_str() {
                    "a3d_m2" => mean.samples.iter().map(|s| s.a3d_m2).collect(),
                    "r3d_m" => mean.samples.iter().map(|s| s.r3d_m).collect(),
                    other => bail!("unknown target `{other}`"),
                };
                out.push(LevelData {
                    case_id: manifest.case_id.clone(),
                    level,
                    phi: manifest.phi,
                    temperature_k: manifest.temperature_k,
                    pressure_mpa: entry.pressure_mpa.unwrap_or(manifest.pressure_mpa),
                    inputs,
                    targets,
                    is_test: false,
                });
            }
        }
        "burning_curve" => {
            for entry in &manifest.level {
                let u = entry
                    .u_prime_mps
                    .ok_or_else(|| anyhow::anyhow!("burning-curve level without u_prime_mps"))?;
                let mut inputs = Vec::new();
                let mut targets = Vec::new();
                for file in &entry.files {
                    let text = std::fs::read_to_string(dataset_dir.join(file))
                        .with_context(|| format!("reading {file}"))?;
                    let curve = BurningCurve::from_csv(&text).map_err(anyhow::Error::from)?;
                    for (r, utm) in curve.r.iter().zip(&curve.u_tm) {
                        inputs.push(vec![*r, u]);
                        targets.push(*utm);
                    }
                }
                out.push(LevelData {
                    case_id: manifest.case_id.clone(),
                    level: u,
                    phi: manifest.phi,
                    temperature_k: manifest.temperature_k,
                    pressure_mpa: manifest.pressure_mpa,
                    inputs,
                    targets,
                    is_test: false,
                });
            }
        }
        other => bail!("unknown data format `{other}`"),
    }
    Ok(out)
}

/// Evaluate the trend model on the same points the network sees, using
/// the level's own operating condition.
pub fn lofi_at(model: &TrendModel, level: &LevelData) -> anyhow::Result<Vec<f64>> {
    level
        .inputs
        .iter()
        .map(|row| {
            match &model.kind {
                TrendKind::HierarchicalLogQuad { .. } => model.eval_hierarchical(
                    row[0],
                    row[1],
                    level.phi,
                    &mufinn::lofi::CondKey {
                        temperature_k: level.temperature_k,
                        pressure_mpa: level.pressure_mpa,
                    },
                ),
                TrendKind::RadialLinear { .. } => model.eval_radial(row[0], row[1]),
                TrendKind::PressureLinear { .. } => model.eval_pressure(row[0], row[1]),
            }
            .map_err(anyhow::Error::from)
        })
        .collect()
}

fn train_dataset(
    cfg: &RunConfig,
    out_dir: &Path,
) -> anyhow::Result<(Vec<LevelData>, MufinnModel, String, String)> {
    let trend_path = out_dir.join("trend_model.json");
    if !trend_path.is_file() {
        bail!(
            "missing trend model {} (run `fit-lofi` first)",
            trend_path.display()
        );
    }
    let trend = TrendModel::load(&trend_path).map_err(anyhow::Error::from)?;
    let holdout = cfg.holdout_spec()?;

    // Assemble high-fidelity level data. Multi-case runs widen the
    // inputs to (t, u', phi, T, P) so the network can tell cases apart.
    let multi = cfg.case.is_multi_case();
    let mut levels: Vec<LevelData> = Vec::new();
    let mut case_contexts: Vec<(f64, f64, f64)> = Vec::new();
    let mut provenance_names: Vec<String> = Vec::new();
    for dir in cfg.case.all_dataset_dirs()? {
        let manifest = Manifest::load(&dir)?;
        let mut case_levels = load_level_data(cfg, &dir, &manifest)?;
        if multi {
            for l in &mut case_levels {
                for row in &mut l.inputs {
                    row.extend([l.phi, l.temperature_k, l.pressure_mpa]);
                }
            }
        }
        levels.extend(case_levels);
        case_contexts.push((manifest.phi, manifest.temperature_k, manifest.pressure_mpa));
        provenance_names.push(manifest.case_id.clone());
    }
    let (train_levels, test_levels) =
        apply_mask(levels, &holdout, |l: &LevelData| l.mask_key(&holdout))
            .map_err(anyhow::Error::from)?;

    // Dense low-fidelity grid spanning the full evaluation range (all
    // levels, masked ones included); one grid per case context.
    let abscissa_hull = hull(
        train_levels
            .iter()
            .chain(&test_levels)
            .flat_map(|l| l.inputs.iter().map(|r| r[0])),
    );
    let level_hull = hull(
        train_levels
            .iter()
            .chain(&test_levels)
            .map(|l| l.level),
    );
    let n = cfg.lofi.grid_points;
    let mut lf_inputs: Vec<Vec<f64>> = Vec::new();
    let mut lf_targets: Vec<f64> = Vec::new();
    for &(phi, temperature, pressure) in &case_contexts {
        let (abscissa_name, level_name, fixed) = match &trend.kind {
            TrendKind::HierarchicalLogQuad { .. } => (
                "t",
                "u_prime",
                vec![
                    ("phi".to_string(), phi),
                    ("temperature".to_string(), temperature),
                    ("pressure".to_string(), pressure),
                ],
            ),
            TrendKind::RadialLinear { .. } => ("r", "u_prime", vec![]),
            TrendKind::PressureLinear { .. } => ("t", "pressure", vec![]),
        };
        let grid = build_lofi_grid(
            &trend,
            vec![
                GridAxis::linspace(abscissa_name, abscissa_hull.0, abscissa_hull.1, n),
                GridAxis::linspace(level_name, level_hull.0, level_hull.1, n.min(25)),
            ],
            fixed,
        )
        .map_err(anyhow::Error::from)?;
        for w in &grid.warnings {
            eprintln!("warning: {w}");
        }
        for i in 0..grid.len() {
            let mut row = grid.node_coords(i);
            if multi {
                row.extend([phi, temperature, pressure]);
            }
            lf_inputs.push(row);
        }
        lf_targets.extend_from_slice(&grid.values);
    }

    let input_dim = if multi { 5 } else { 2 };
    let lf = FitData::new(lf_inputs, lf_targets).map_err(anyhow::Error::from)?;
    let hf = FitData::new(
        train_levels.iter().flat_map(|l| l.inputs.clone()).collect(),
        train_levels.iter().flat_map(|l| l.targets.clone()).collect(),
    )
    .map_err(anyhow::Error::from)?;

    let norm = compute_norm_stats(
        &[lf.inputs.clone(), hf.inputs.clone()].concat(),
        &[lf.targets.clone(), hf.targets.clone()].concat(),
    )
    .map_err(anyhow::Error::from)?;
    let model0 = MufinnModel::init(
        &MufinnConfig {
            input_dim,
            lf_hidden: cfg.model.lf_hidden.clone(),
            nl_hidden: cfg.model.nl_hidden.clone(),
            nl_enabled: cfg.model.nl_enabled,
            seed: cfg.seed,
        },
        norm,
        cfg.provenance(&format!("trained on cases [{}]", provenance_names.join(", "))),
    )
    .map_err(anyhow::Error::from)?;

    let (model, report) = train(
        &model0,
        &lf,
        &hf,
        &cfg.loss_config(),
        &cfg.adam_config(),
        &cfg.lbfgs_config(),
    )
    .map_err(anyhow::Error::from)?;

    // Per-split RMSE summary against the measured targets.
    let mut summary = String::from("case,level,split,n_points,rmse\n");
    let mut all = Vec::new();
    for (mut level, is_test) in train_levels
        .into_iter()
        .map(|l| (l, false))
        .chain(test_levels.into_iter().map(|l| (l, true)))
    {
        level.is_test = is_test;
        let pred = model.predict(&level.inputs).map_err(anyhow::Error::from)?;
        let rmse = evaluate_rmse(&pred, &level.targets).map_err(anyhow::Error::from)?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{rmse}",
            level.case_id,
            level.level,
            if is_test { "test" } else { "train" },
            level.targets.len()
        );
        all.push(level);
    }

    Ok((all, model, report.history_csv(), summary))
}

fn hull(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}
