//! Per-condition prediction export: one tidy CSV per level with the
//! measured mean, the low-fidelity trend, the model prediction and the
//! split tag, plus a summary RMSE table.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::bail;

use mufinn::lofi::TrendModel;
use mufinn::model::MufinnModel;
use mufinn::synth::evaluate_rmse;

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::ensure_dir;
use super::train::{load_level_data, lofi_at, LevelData};

pub fn run(cfg: &RunConfig, out_dir: &Path, model_path: &Path) -> anyhow::Result<()> {
    ensure_dir(out_dir)?;
    let model = MufinnModel::load(model_path).map_err(anyhow::Error::from)?;
    let trend_path = out_dir.join("trend_model.json");
    if !trend_path.is_file() {
        bail!("missing trend model {}", trend_path.display());
    }
    let trend = TrendModel::load(&trend_path).map_err(anyhow::Error::from)?;
    let holdout = cfg.holdout_spec()?;
    let multi = cfg.case.is_multi_case();

    let mut levels: Vec<LevelData> = Vec::new();
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
    }
    if levels.is_empty() {
        bail!("no conditions found in the dataset");
    }
    for masked in &holdout.masked_levels {
        if !levels
            .iter()
            .any(|l| mufinn::lofi::levels_match(l.level, *masked))
        {
            bail!("condition {masked} absent from both splits");
        }
    }
    for masked in &holdout.masked_cases {
        if !levels.iter().any(|l| &l.case_id == masked) {
            bail!("condition `{masked}` absent from both splits");
        }
    }

    let mut summary = String::from("case,level,split,n_points,rmse\n");
    let mut any_test = false;
    for level in &levels {
        let is_test = match level.mask_key(&holdout) {
            mufinn::dataset::MaskKey::Case(c) => holdout.masked_cases.contains(&c),
            mufinn::dataset::MaskKey::Level(v) => holdout
                .masked_levels
                .iter()
                .any(|m| mufinn::lofi::levels_match(*m, v)),
        };
        any_test |= is_test;
        let tag = if is_test { "test" } else { "train" };

        let pred = model.predict(&level.inputs).map_err(anyhow::Error::from)?;
        let lofi = lofi_at(&trend, level)?;

        let mut csv = String::from("abscissa,hifi_mean,lofi,prediction,split_tag\n");
        for i in 0..level.inputs.len() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{tag}",
                level.inputs[i][0], level.targets[i], lofi[i], pred[i]
            );
        }
        let fname = if multi {
            format!("eval_{}_level_{}.csv", level.case_id, fmt_level(level.level))
        } else {
            format!("eval_level_{}.csv", fmt_level(level.level))
        };
        std::fs::write(out_dir.join(&fname), csv)?;

        let rmse = evaluate_rmse(&pred, &level.targets).map_err(anyhow::Error::from)?;
        let _ = writeln!(
            summary,
            "{},{},{tag},{},{rmse}",
            level.case_id,
            level.level,
            level.targets.len()
        );
    }
    if !any_test {
        let _ = writeln!(summary, "# interpolation-only run: test split is empty");
    }
    std::fs::write(out_dir.join("rmse_summary.csv"), &summary)?;
    print!("{summary}");
    println!("evaluate: per-condition CSVs written to {}", out_dir.display());
    Ok(())
}

fn fmt_level(level: f64) -> String {
    format!("{level}").replace('.', "p")
}
