//! Fit the low-fidelity trend model from the canonical dataset, export
//! the dense grid and a per-stage residual report.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use mufinn::dataset::replicate_mean;
use mufinn::lofi::{
    build_lofi_grid, fit_coeff_surface, fit_linear_trend, fit_log_quadratic, fit_pressure_linear,
    AxisRange, Basis, CoeffSurface, CondKey, GridAxis, ThermoCorrection, TrendKind, TrendModel,
    TREND_MODEL_VERSION,
};
use mufinn::signal::BurningCurve;

use crate::config::RunConfig;
use crate::manifest::Manifest;

use super::ensure_dir;

pub fn run(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    ensure_dir(out_dir)?;
    let basis = parse_basis(&cfg.lofi.basis)?;
    let mut report = String::from("low-fidelity fit report\n=======================\n");

    let (model, grids) = if cfg.case.is_multi_case() {
        if cfg.case.kind != "flame" {
            bail!("multi-case fitting applies to the flame kind only");
        }
        fit_flame_multicase(cfg, basis, &mut report)?
    } else {
        let dataset_dir = &cfg.case.all_dataset_dirs()?[0];
        if !dataset_dir.join("manifest.toml").is_file() {
            bail!(
                "missing data: no canonical dataset at {} (run `ingest` or `synth` first)",
                dataset_dir.display()
            );
        }
        let mut manifest = Manifest::load(dataset_dir)?;

        // The trend is inferred from the training subset only: masked
        // levels must stay invisible to every stage.
        let holdout = cfg.holdout_spec()?;
        if !holdout.is_empty() {
            let all = std::mem::take(&mut manifest.level);
            let (train, masked) = mufinn::dataset::apply_mask(all, &holdout, |entry| {
                mufinn::dataset::MaskKey::Level(
                    entry.u_prime_mps.or(entry.pressure_mpa).unwrap_or(0.0),
                )
            })
            .map_err(anyhow::Error::from)?;
            let _ = writeln!(
                report,
                "hold-out: {} level(s) masked out of {}",
                masked.len(),
                train.len() + masked.len()
            );
            manifest.level = train;
        }
        let (model, grid) = match cfg.case.kind.as_str() {
            "flame" => fit_flame(cfg, dataset_dir, &manifest, basis, &mut report)?,
            "pressure_radius" => fit_pressure_radius(cfg, dataset_dir, &manifest, &mut report)?,
            "pressure_utm" => fit_utm(cfg, dataset_dir, &manifest, basis, &mut report)?,
            other => bail!("fit-lofi does not apply to case kind `{other}`"),
        };
        (model, vec![("lofi_grid.csv".to_string(), grid)])
    };

    model.save(&out_dir.join("trend_model.json")).map_err(anyhow::Error::from)?;
    let mut total_nodes = 0;
    for (name, grid) in &grids {
        std::fs::write(out_dir.join(name), grid.to_csv())?;
        total_nodes += grid.len();
        for w in &grid.warnings {
            let _ = writeln!(report, "warning: {w}");
            eprintln!("warning: {w}");
        }
    }
    std::fs::write(out_dir.join("lofi_residuals.txt"), &report)
        .context("writing residual report")?;
    println!(
        "fit-lofi: trend model `{}` with {total_nodes} grid nodes written to {}",
        model.name,
        out_dir.display()
    );
    Ok(())
}

/// Hierarchical multi-case construction: base coefficient surfaces are
/// pooled over every case at the reference `(T, P)` pair, and the other
/// pairs receive additive per-coefficient offsets. One dense grid is
/// exported per case.
fn fit_flame_multicase(
    cfg: &RunConfig,
    basis: Basis,
    report: &mut String,
) -> anyhow::Result<(TrendModel, Vec<(String, mufinn::lofi::LofiGrid)>)> {
    use mufinn::dataset::{apply_mask, MaskKey};
    use mufinn::lofi::{fit_thermo_correction, CaseCoeffs};

    let holdout = cfg.holdout_spec()?;
    let mut cases: Vec<(std::path::PathBuf, Manifest)> = Vec::new();
    for dir in cfg.case.all_dataset_dirs()? {
        let manifest = Manifest::load(&dir)?;
        cases.push((dir, manifest));
    }

    // Whole-case masking (the unseen-case protocol) removes the case
    // from every fitting stage.
    if !holdout.masked_cases.is_empty() {
        let (train, masked) = apply_mask(cases, &holdout, |(_, m): &(_, Manifest)| {
            MaskKey::Case(m.case_id.clone())
        })
        .map_err(anyhow::Error::from)?;
        let _ = writeln!(
            report,
            "hold-out: {} case(s) masked out of {}",
            masked.len(),
            train.len() + masked.len()
        );
        cases = train;
    }

    let refk = match cfg.lofi.reference {
        Some([t, p]) => CondKey { temperature_k: t, pressure_mpa: p },
        None => CondKey {
            temperature_k: cases[0].1.temperature_k,
            pressure_mpa: cases[0].1.pressure_mpa,
        },
    };

    let mut case_coeffs: Vec<CaseCoeffs> = Vec::new();
    let mut base_pts = [Vec::new(), Vec::new(), Vec::new()];
    let mut t_hull = (f64::INFINITY, f64::NEG_INFINITY);
    let mut u_hull = (f64::INFINITY, f64::NEG_INFINITY);

    for (dir, manifest) in &cases {
        let mut levels = manifest.level.clone();
        if !holdout.masked_levels.is_empty() {
            let (train, _) = apply_mask(levels, &holdout, |e: &crate::manifest::LevelEntry| {
                MaskKey::Level(e.u_prime_mps.unwrap_or(0.0))
            })
            .map_err(anyhow::Error::from)?;
            levels = train;
        }
        let key = CondKey {
            temperature_k: manifest.temperature_k,
            pressure_mpa: manifest.pressure_mpa,
        };
        let mut fitted_levels = Vec::new();
        for entry in &levels {
            let traces = manifest.load_level_traces(dir, entry)?;
            let mean = mufinn::dataset::replicate_mean(&traces).map_err(anyhow::Error::from)?;
            let times: Vec<f64> = mean.samples.iter().map(|s| s.t_s).collect();
            let values = target_series(&mean, &cfg.case.target)?;
            let fit = fit_log_quadratic(&times, &values).map_err(anyhow::Error::from)?;
            let u = entry.u_prime_mps.unwrap_or(0.0);
            let _ = writeln!(
                report,
                "case {} u'={u}: log-quadratic rms residual = {:.3e}",
                manifest.case_id, fit.rms_log_residual
            );
            fitted_levels.push((u, manifest.phi, fit.coeffs));
            if key.matches(&refk) {
                base_pts[0].push((u, manifest.phi, fit.coeffs.c0));
                base_pts[1].push((u, manifest.phi, fit.coeffs.c1));
                base_pts[2].push((u, manifest.phi, fit.coeffs.c2));
            }
            t_hull.0 = t_hull.0.min(times[0]);
            t_hull.1 = t_hull.1.max(*times.last().unwrap());
            u_hull.0 = u_hull.0.min(u);
            u_hull.1 = u_hull.1.max(u);
        }
        case_coeffs.push(CaseCoeffs { condition: key, levels: fitted_levels });
    }
    if base_pts[0].is_empty() {
        bail!(
            "no case matches the reference condition T={} K, P={} MPa",
            refk.temperature_k, refk.pressure_mpa
        );
    }

    let mut base = Vec::new();
    for (i, pts) in base_pts.iter().enumerate() {
        let s = fit_coeff_surface(pts, basis).map_err(anyhow::Error::from)?;
        let _ = writeln!(
            report,
            "coefficient {i}: base surface over {} reference-pair points, rms residual = {:.3e}",
            pts.len(),
            surface_rms(&s, pts)
        );
        base.push(s);
    }
    let base: [CoeffSurface; 3] = [base[0].clone(), base[1].clone(), base[2].clone()];
    let thermo = fit_thermo_correction(&base, &case_coeffs, refk).map_err(anyhow::Error::from)?;
    for (key, delta) in &thermo.offsets {
        let _ = writeln!(
            report,
            "thermo offset at T={} K, P={} MPa: [{:.4e}, {:.4e}, {:.4e}]",
            key.temperature_k, key.pressure_mpa, delta[0], delta[1], delta[2]
        );
    }

    let model = TrendModel {
        version: TREND_MODEL_VERSION,
        name: format!("multicase-{}", cfg.case.target),
        target: cfg.case.target.clone(),
        kind: TrendKind::HierarchicalLogQuad { base, thermo },
        validity: vec![
            AxisRange { name: "t".into(), min: t_hull.0, max: t_hull.1 },
            AxisRange { name: "u_prime".into(), min: u_hull.0, max: u_hull.1 },
        ],
        provenance: cfg.provenance("multi-case hierarchical fit"),
    };

    let n = cfg.lofi.grid_points;
    let mut grids = Vec::new();
    for (_, manifest) in &cases {
        let grid = build_lofi_grid(
            &model,
            vec![
                GridAxis::linspace("t", t_hull.0, t_hull.1, n),
                GridAxis::linspace("u_prime", u_hull.0, u_hull.1, n),
            ],
            vec![
                ("phi".into(), manifest.phi),
                ("temperature".into(), manifest.temperature_k),
                ("pressure".into(), manifest.pressure_mpa),
            ],
        )
        .map_err(anyhow::Error::from)?;
        grids.push((format!("lofi_grid_{}.csv", manifest.case_id), grid));
    }
    Ok((model, grids))
}

fn parse_basis(name: &str) -> anyhow::Result<Basis> {
    match name {
        "quad2d" => Ok(Basis::Quad2d),
        "linear" => Ok(Basis::Linear),
        other => bail!("unknown basis `{other}` (quad2d | linear)"),
    }
}

fn target_series(trace: &mufinn::dataset::FlameTrace, target: &str) -> anyhow::Result<Vec<f64>> {
    match target {
        "a3d_m2" => Ok(trace.samples.iter().map(|s| s.a3d_m2).collect()),
        "r3d_m" => Ok(trace.samples.iter().map(|s| s.r3d_m).collect()),
        other => bail!("unknown target `{other}` for flame traces (a3d_m2 | r3d_m)"),
    }
}

fn fit_flame(
    cfg: &RunConfig,
    dataset_dir: &Path,
    manifest: &Manifest,
    basis: Basis,
    report: &mut String,
) -> anyhow::Result<(TrendModel, mufinn::lofi::LofiGrid)> {
    let target = &cfg.case.target;
    let mut coeff_pts = [Vec::new(), Vec::new(), Vec::new()];
    let mut t_hull = (f64::INFINITY, f64::NEG_INFINITY);
    let mut u_hull = (f64::INFINITY, f64::NEG_INFINITY);

    for entry in &manifest.level {
        let traces = manifest.load_level_traces(dataset_dir, entry)?;
        let mean = replicate_mean(&traces).map_err(anyhow::Error::from)?;
        let times: Vec<f64> = mean.samples.iter().map(|s| s.t_s).collect();
        let values = target_series(&mean, target)?;
        let fit = fit_log_quadratic(&times, &values).map_err(anyhow::Error::from)?;
        let u = entry.u_prime_mps.unwrap_or(0.0);
        let _ = writeln!(
            report,
            "level u'={u}: log-quadratic fit rms residual (log space) = {:.3e}",
            fit.rms_log_residual
        );
        coeff_pts[0].push((u, manifest.phi, fit.coeffs.c0));
        coeff_pts[1].push((u, manifest.phi, fit.coeffs.c1));
        coeff_pts[2].push((u, manifest.phi, fit.coeffs.c2));
        t_hull.0 = t_hull.0.min(times[0]);
        t_hull.1 = t_hull.1.max(*times.last().unwrap());
        u_hull.0 = u_hull.0.min(u);
        u_hull.1 = u_hull.1.max(u);
    }

    let mut surfaces = Vec::new();
    for (i, pts) in coeff_pts.iter().enumerate() {
        let s = fit_coeff_surface(pts, basis).map_err(anyhow::Error::from)?;
        if s.downgraded {
            let _ = writeln!(report, "coefficient {i}: basis downgraded to {} terms", s.terms.len());
        }
        let rms = surface_rms(&s, pts);
        let _ = writeln!(report, "coefficient {i}: surface rms residual = {rms:.3e}");
        surfaces.push(s);
    }

    // One (T, P) condition per dataset: the thermodynamic correction has
    // nothing to estimate.
    let refk = CondKey { temperature_k: manifest.temperature_k, pressure_mpa: manifest.pressure_mpa };
    let _ = writeln!(
        report,
        "thermo correction skipped: single condition (T={} K, P={} MPa) is its own reference",
        refk.temperature_k, refk.pressure_mpa
    );
    println!("fit-lofi: thermo correction skipped (single thermodynamic condition)");

    let model = TrendModel {
        version: TREND_MODEL_VERSION,
        name: format!("{}-{}", manifest.case_id, target),
        target: target.clone(),
        kind: TrendKind::HierarchicalLogQuad {
            base: [surfaces[0].clone(), surfaces[1].clone(), surfaces[2].clone()],
            thermo: ThermoCorrection::none(refk),
        },
        validity: vec![
            AxisRange { name: "t".into(), min: t_hull.0, max: t_hull.1 },
            AxisRange { name: "u_prime".into(), min: u_hull.0, max: u_hull.1 },
        ],
        provenance: format!("fit from {}", dataset_dir.display()),
    };
    let n = cfg.lofi.grid_points;
    let grid = build_lofi_grid(
        &model,
        vec![
            GridAxis::linspace("t", t_hull.0, t_hull.1, n),
            GridAxis::linspace("u_prime", u_hull.0, u_hull.1, n),
        ],
        vec![
            ("phi".into(), manifest.phi),
            ("temperature".into(), manifest.temperature_k),
            ("pressure".into(), manifest.pressure_mpa),
        ],
    )
    .map_err(anyhow::Error::from)?;
    Ok((model, grid))
}

fn fit_pressure_radius(
    cfg: &RunConfig,
    dataset_dir: &Path,
    manifest: &Manifest,
    report: &mut String,
) -> anyhow::Result<(TrendModel, mufinn::lofi::LofiGrid)> {
    let mut series = Vec::new();
    let mut t_hull = (f64::INFINITY, f64::NEG_INFINITY);
    for entry in &manifest.level {
        let p = entry
            .pressure_mpa
            .ok_or_else(|| anyhow::anyhow!("pressure sweep level is missing pressure_mpa"))?;
        let traces = manifest.load_level_traces(dataset_dir, entry)?;
        let mean = replicate_mean(&traces).map_err(anyhow::Error::from)?;
        let t: Vec<f64> = mean.samples.iter().map(|s| s.t_s).collect();
        let r: Vec<f64> = mean.samples.iter().map(|s| s.r3d_m).collect();
        t_hull.0 = t_hull.0.min(t[0]);
        t_hull.1 = t_hull.1.max(*t.last().unwrap());
        series.push((p, t, r));
    }
    let (ps, slopes, intercepts) = fit_pressure_linear(&series).map_err(anyhow::Error::from)?;
    for ((p, t, r), (a, b)) in series.iter().zip(slopes.iter().zip(&intercepts)) {
        let rms = (t
            .iter()
            .zip(r)
            .map(|(&tt, &rr)| {
                let e = rr - (a * tt + b);
                e * e
            })
            .sum::<f64>()
            / t.len() as f64)
            .sqrt();
        let _ = writeln!(report, "pressure {p} MPa: linear fit rms residual = {rms:.3e}");
    }

    let model = TrendModel {
        version: TREND_MODEL_VERSION,
        name: format!("{}-r3d_m", manifest.case_id),
        target: "r3d_m".into(),
        kind: TrendKind::PressureLinear { pressures_mpa: ps.clone(), slopes, intercepts },
        validity: vec![
            AxisRange { name: "t".into(), min: t_hull.0, max: t_hull.1 },
            AxisRange { name: "pressure".into(), min: ps[0], max: *ps.last().unwrap() },
        ],
        provenance: format!("fit from {}", dataset_dir.display()),
    };
    let n = cfg.lofi.grid_points;
    let grid = build_lofi_grid(
        &model,
        vec![
            GridAxis::linspace("t", t_hull.0, t_hull.1, n),
            GridAxis::linspace("pressure", ps[0], *ps.last().unwrap(), n),
        ],
        vec![],
    )
    .map_err(anyhow::Error::from)?;
    Ok((model, grid))
}

fn fit_utm(
    cfg: &RunConfig,
    dataset_dir: &Path,
    manifest: &Manifest,
    basis: Basis,
    report: &mut String,
) -> anyhow::Result<(TrendModel, mufinn::lofi::LofiGrid)> {
    if manifest.data_format != "burning_curve" {
        bail!("pressure_utm fitting needs burning-curve data (run `ingest` first)");
    }
    let mut slope_pts = Vec::new();
    let mut intercept_pts = Vec::new();
    let mut r_hull = (f64::INFINITY, f64::NEG_INFINITY);
    let mut u_hull = (f64::INFINITY, f64::NEG_INFINITY);
    for entry in &manifest.level {
        let u = entry
            .u_prime_mps
            .ok_or_else(|| anyhow::anyhow!("burning-curve level is missing u_prime_mps"))?;
        let mut r_all = Vec::new();
        let mut utm_all = Vec::new();
        for file in &entry.files {
            let text = std::fs::read_to_string(dataset_dir.join(file))
                .with_context(|| format!("reading {file}"))?;
            let curve = BurningCurve::from_csv(&text).map_err(anyhow::Error::from)?;
            r_all.extend(curve.r);
            utm_all.extend(curve.u_tm);
        }
        let (a, b) = fit_linear_trend(&r_all, &utm_all).map_err(anyhow::Error::from)?;
        let rms = (r_all
            .iter()
            .zip(&utm_all)
            .map(|(&rr, &uu)| {
                let e = uu - (a * rr + b);
                e * e
            })
            .sum::<f64>()
            / r_all.len() as f64)
            .sqrt();
        let _ = writeln!(report, "level u'={u}: u_tm(r) linear fit rms residual = {rms:.3e}");
        slope_pts.push((u, manifest.phi, a));
        intercept_pts.push((u, manifest.phi, b));
        r_hull.0 = r_hull.0.min(r_all.iter().cloned().fold(f64::INFINITY, f64::min));
        r_hull.1 = r_hull.1.max(r_all.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        u_hull.0 = u_hull.0.min(u);
        u_hull.1 = u_hull.1.max(u);
    }
    let slope = fit_coeff_surface(&slope_pts, basis).map_err(anyhow::Error::from)?;
    let intercept = fit_coeff_surface(&intercept_pts, basis).map_err(anyhow::Error::from)?;

    let model = TrendModel {
        version: TREND_MODEL_VERSION,
        name: format!("{}-utm_mps", manifest.case_id),
        target: "utm_mps".into(),
        kind: TrendKind::RadialLinear { slope, intercept },
        validity: vec![
            AxisRange { name: "r".into(), min: r_hull.0, max: r_hull.1 },
            AxisRange { name: "u_prime".into(), min: u_hull.0, max: u_hull.1 },
        ],
        provenance: format!("fit from {}", dataset_dir.display()),
    };
    let n = cfg.lofi.grid_points;
    let grid = build_lofi_grid(
        &model,
        vec![
            GridAxis::linspace("r", r_hull.0, r_hull.1, n),
            GridAxis::linspace("u_prime", u_hull.0, u_hull.1, n),
        ],
        vec![],
    )
    .map_err(anyhow::Error::from)?;
    Ok((model, grid))
}

fn surface_rms(s: &mufinn::lofi::CoeffSurface, pts: &[(f64, f64, f64)]) -> f64 {
    (pts.iter()
        .map(|&(u, phi, v)| {
            let e = v - s.eval(u, phi);
            e * e
        })
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt()
}
