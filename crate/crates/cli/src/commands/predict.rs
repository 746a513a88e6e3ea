//! Evaluate a trained model over a grid of inputs derived from its
//! training provenance, or over the rows of an explicit inputs CSV named
//! in the config.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

use mufinn::model::MufinnModel;

use crate::config::RunConfig;

use super::ensure_dir;

pub fn run(cfg: &RunConfig, out_dir: &Path, model_path: &Path) -> anyhow::Result<()> {
    ensure_dir(out_dir)?;
    let model = MufinnModel::load(model_path).map_err(anyhow::Error::from)?;
    let dim = model.input_dim();

    // Inputs: an explicit CSV when provided, otherwise a uniform grid
    // over the normalization hull (mean ± 2 std per feature).
    let inputs: Vec<Vec<f64>> = match &cfg.case.predict_inputs {
        Some(path) => read_inputs_csv(path, dim)?,
        _ => {
            let n = cfg.lofi.grid_points.max(2);
            let axes: Vec<Vec<f64>> = (0..dim)
                .map(|f| {
                    let m = model.norm.input_mean[f];
                    let s = model.norm.input_std[f];
                    (0..n)
                        .map(|i| m - 2.0 * s + 4.0 * s * i as f64 / (n - 1) as f64)
                        .collect()
                })
                .collect();
            cartesian(&axes)
        }
    };

    let pred = model.predict(&inputs).map_err(anyhow::Error::from)?;
    let mut csv = String::new();
    for f in 0..dim {
        let _ = write!(csv, "x{f},");
    }
    csv.push_str("prediction\n");
    for (row, p) in inputs.iter().zip(&pred) {
        for v in row {
            let _ = write!(csv, "{v},");
        }
        let _ = writeln!(csv, "{p}");
    }
    std::fs::write(out_dir.join("predictions.csv"), csv)?;
    println!(
        "predict: {} predictions written to {}",
        pred.len(),
        out_dir.join("predictions.csv").display()
    );
    Ok(())
}

fn read_inputs_csv(path: &Path, dim: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading inputs {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let values: std::result::Result<Vec<f64>, _> =
            parts.iter().map(|p| p.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if v.len() >= dim => rows.push(v[..dim].to_vec()),
            Ok(_) => anyhow::bail!(
                "{}: row {} has fewer than {dim} columns",
                path.display(),
                i + 1
            ),
            // Header row.
            Err(_) if i == 0 => continue,
            Err(e) => anyhow::bail!("{}: row {}: {e}", path.display(), i + 1),
        }
    }
    if rows.is_empty() {
        anyhow::bail!("{}: no input rows", path.display());
    }
    Ok(rows)
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut row = vec![0.0; axes.len()];
            for (k, axis) in axes.iter().enumerate().rev() {
                row[k] = axis[rem % axis.len()];
                rem /= axis.len();
            }
            row
        })
        .collect()
}
