//! Validate raw inputs and write the canonical dataset plus a report.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use mufinn::signal::{process_pressure_trace, read_pressure_csv};

use crate::config::RunConfig;
use crate::manifest::{LevelEntry, Manifest};

use super::ensure_dir;

pub fn run(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    let input_dir = cfg
        .case
        .input_dir
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("[case] input_dir is required for ingest"))?;
    if !input_dir.is_dir() || std::fs::read_dir(input_dir)?.next().is_none() {
        bail!("no data: input directory {} is missing or empty", input_dir.display());
    }
    ensure_dir(out_dir)?;
    let dataset_dir = out_dir.join("dataset");
    ensure_dir(&dataset_dir)?;

    let manifest = Manifest::load(input_dir)?;
    let mut report = String::from("ingest validation report\n========================\n");
    let mut failures: Vec<String> = Vec::new();
    let mut accepted = 0usize;

    let out_manifest = match (cfg.case.kind.as_str(), manifest.data_format.as_str()) {
        ("pressure_utm", "pressure_trace") => ingest_pressure(
            cfg,
            input_dir,
            &dataset_dir,
            &manifest,
            &mut report,
            &mut failures,
            &mut accepted,
        )?,
        (_, "flame_trace") => ingest_flame(
            input_dir,
            &dataset_dir,
            &manifest,
            &mut report,
            &mut failures,
            &mut accepted,
        )?,
        (kind, fmt) => bail!("case kind `{kind}` cannot ingest data format `{fmt}`"),
    };

    let _ = writeln!(report, "\naccepted files: {accepted}");
    let _ = writeln!(report, "rejected files: {}", failures.len());
    std::fs::write(out_dir.join("ingest_report.txt"), &report)
        .context("writing ingest report")?;

    if !failures.is_empty() {
        bail!("{} file(s) rejected:\n{}", failures.len(), failures.join("\n"));
    }
    out_manifest.save(&dataset_dir)?;
    println!(
        "ingest: {accepted} files validated into {}",
        dataset_dir.display()
    );
    Ok(())
}

fn ingest_flame(
    input_dir: &Path,
    dataset_dir: &Path,
    manifest: &Manifest,
    report: &mut String,
    failures: &mut Vec<String>,
    accepted: &mut usize,
) -> anyhow::Result<Manifest> {
    for entry in &manifest.level {
        let condition = manifest.condition_for(entry)?;
        for file in &entry.files {
            let src = input_dir.join(file);
            match mufinn::dataset::read_flame_csv(&src) {
                Ok(samples) => {
                    match mufinn::dataset::FlameTrace::new(condition.clone(), 0, samples) {
                        Ok(trace) => {
                            let suspect = trace.suspect_samples();
                            std::fs::write(dataset_dir.join(file), trace.to_csv())?;
                            *accepted += 1;
                            let _ = writeln!(
                                report,
                                "OK       {file} ({} samples{})",
                                trace.samples.len(),
                                if suspect.is_empty() {
                                    String::new()
                                } else {
                                    format!("; {} samples with wrinkling < 1 flagged", suspect.len())
                                }
                            );
                        }
                        Err(e) => {
                            let _ = writeln!(report, "REJECTED {file}: {e}");
                            failures.push(format!("{file}: {e}"));
                        }
                    }
                }
                Err(e) => {
                    let _ = writeln!(report, "REJECTED {file}: {e}");
                    failures.push(format!("{file}: {e}"));
                }
            }
        }
    }
    Ok(manifest.clone())
}

/// Pressure traces run through the full measurement pipeline; the
/// canonical dataset holds the resulting burning-velocity curves.
fn ingest_pressure(
    cfg: &RunConfig,
    input_dir: &Path,
    dataset_dir: &Path,
    manifest: &Manifest,
    report: &mut String,
    failures: &mut Vec<String>,
    accepted: &mut usize,
) -> anyhow::Result<Manifest> {
    let pipeline = cfg.pipeline_config()?;
    let mut levels = Vec::new();
    for entry in &manifest.level {
        let mut files = Vec::new();
        for file in &entry.files {
            let csv = input_dir.join(file);
            let sidecar = csv.with_extension("meta.toml");
            match read_pressure_csv(&csv, &sidecar)
                .and_then(|trace| process_pressure_trace(&trace, &pipeline))
            {
                Ok(out) => {
                    let curve_name = format!("{}.curve.csv", file.trim_end_matches(".csv"));
                    std::fs::write(dataset_dir.join(&curve_name), out.smoothed.to_csv())?;
                    let raw_name = format!("{}.raw_curve.csv", file.trim_end_matches(".csv"));
                    std::fs::write(dataset_dir.join(&raw_name), out.raw.to_csv())?;
                    *accepted += 1;
                    let _ = writeln!(
                        report,
                        "OK       {file} -> {curve_name} ({} points{})",
                        out.smoothed.r.len(),
                        if out.warnings.is_empty() {
                            String::new()
                        } else {
                            format!("; {}", out.warnings.join("; "))
                        }
                    );
                    files.push(curve_name);
                }
                Err(e) => {
                    let _ = writeln!(report, "REJECTED {file}: {e}");
                    failures.push(format!("{file}: {e}"));
                }
            }
        }
        levels.push(LevelEntry {
            u_prime_mps: entry.u_prime_mps,
            pressure_mpa: entry.pressure_mpa,
            files,
        });
    }
    Ok(Manifest {
        data_format: "burning_curve".into(),
        target: "utm_mps".into(),
        level: levels,
        ..manifest.clone()
    })
}
