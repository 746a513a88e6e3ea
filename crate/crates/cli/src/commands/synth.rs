//! Synthetic dataset generation in the canonical on-disk schema, so the
//! whole pipeline runs unmodified on data with known ground truth.

use std::path::Path;

use anyhow::{bail, Context};

use mufinn::dataset::{CaseCondition, Fuel};
use mufinn::lofi::{
    AxisRange, Basis, CoeffSurface, CondKey, SurfaceTerm, ThermoCorrection, TrendKind, TrendModel,
    TREND_MODEL_VERSION,
};
use mufinn::signal::{write_meta_sidecar, write_pressure_csv, PressureTrace, TraceMeta};
use mufinn::synth::{generate_flame_case, Perturbation, SyntheticFlameSpec};

use crate::config::RunConfig;
use crate::manifest::{LevelEntry, Manifest};

use super::ensure_dir;

fn quadratic_surface(law: &[f64; 3]) -> CoeffSurface {
    CoeffSurface {
        basis: Basis::Quad2d,
        terms: vec![
            SurfaceTerm { u_pow: 0, phi_pow: 0 },
            SurfaceTerm { u_pow: 1, phi_pow: 0 },
            SurfaceTerm { u_pow: 2, phi_pow: 0 },
        ],
        coeffs: law.to_vec(),
        downgraded: false,
    }
}

/// Quadratic in u' plus a linear phi term.
fn quad_phi_surface(law: &[f64; 3], phi_coeff: f64) -> CoeffSurface {
    CoeffSurface {
        basis: Basis::Quad2d,
        terms: vec![
            SurfaceTerm { u_pow: 0, phi_pow: 0 },
            SurfaceTerm { u_pow: 1, phi_pow: 0 },
            SurfaceTerm { u_pow: 2, phi_pow: 0 },
            SurfaceTerm { u_pow: 0, phi_pow: 1 },
        ],
        coeffs: vec![law[0], law[1], law[2], phi_coeff],
        downgraded: false,
    }
}

pub fn run(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    ensure_dir(out_dir)?;
    let s = &cfg.synth;
    let time_grid: Vec<f64> = (0..s.t_points)
        .map(|i| s.t_min + (s.t_max - s.t_min) * i as f64 / (s.t_points.max(2) - 1) as f64)
        .collect();

    match s.kind.as_str() {
        "flame" if !s.case.is_empty() => synth_flame_cases(cfg, out_dir, &time_grid),
        "flame" => synth_flame(cfg, out_dir, &time_grid),
        "pressure_radius" => synth_pressure_radius(cfg, out_dir, &time_grid),
        "pressure_trace" => synth_pressure_trace(cfg, out_dir),
        other => bail!("unknown synth kind `{other}` (flame | pressure_radius | pressure_trace)"),
    }
}

/// Multi-case generation: one dataset subdirectory per declared case,
/// all drawn from a single hierarchical truth whose base surfaces carry
/// a phi term and whose thermodynamic offsets are the configured deltas.
fn synth_flame_cases(cfg: &RunConfig, out_dir: &Path, time_grid: &[f64]) -> anyhow::Result<()> {
    let s = &cfg.synth;
    let refk = CondKey {
        temperature_k: s.case[0].temperature_k,
        pressure_mpa: s.case[0].pressure_mpa,
    };
    let mut offsets = vec![(refk, [0.0; 3])];
    for c in &s.case {
        let key = CondKey { temperature_k: c.temperature_k, pressure_mpa: c.pressure_mpa };
        if key.matches(&refk) {
            if c.delta != 0.0 {
                bail!("case `{}` shares the reference condition but declares a nonzero delta", c.label);
            }
            continue;
        }
        if !offsets.iter().any(|(k, _)| k.matches(&key)) {
            offsets.push((key, [c.delta; 3]));
        }
    }
    let trend = TrendModel {
        version: TREND_MODEL_VERSION,
        name: "synthetic-multicase-truth".into(),
        target: "a3d_m2".into(),
        kind: TrendKind::HierarchicalLogQuad {
            base: [
                quad_phi_surface(&s.trend_a0, s.trend_phi[0]),
                quad_phi_surface(&s.trend_a1, s.trend_phi[1]),
                quad_phi_surface(&s.trend_a2, s.trend_phi[2]),
            ],
            thermo: ThermoCorrection { reference: refk, offsets },
        },
        validity: vec![
            AxisRange { name: "t".into(), min: s.t_min, max: s.t_max },
            AxisRange {
                name: "u_prime".into(),
                min: s.u_prime_levels.iter().cloned().fold(f64::INFINITY, f64::min),
                max: s.u_prime_levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        ],
        provenance: "synthetic generator".into(),
    };

    let mut total = 0;
    for (ci, case) in s.case.iter().enumerate() {
        let case_dir = out_dir.join(&case.label);
        ensure_dir(&case_dir)?;
        let conditions: Vec<CaseCondition> = s
            .u_prime_levels
            .iter()
            .map(|&u| CaseCondition {
                fuel: Fuel::Ch4,
                case_id: case.label.clone(),
                phi: case.phi,
                temperature_k: case.temperature_k,
                pressure_mpa: case.pressure_mpa,
                u_prime_mps: u,
            })
            .collect();
        let spec = SyntheticFlameSpec {
            trend: trend.clone(),
            perturbation: Perturbation {
                amplitude: s.perturbation_amplitude,
                u_freq: s.perturbation_freq,
            },
            noise_std: s.noise_std,
            seed: cfg.seed.wrapping_add(ci as u64),
            replicates: s.replicates,
        };
        let (traces, _) = generate_flame_case(&spec, &conditions, time_grid)
            .map_err(anyhow::Error::from)?;

        let mut levels = Vec::new();
        for (li, &u) in s.u_prime_levels.iter().enumerate() {
            let mut files = Vec::new();
            for rep in 0..s.replicates {
                let trace = &traces[li * s.replicates + rep];
                let name = format!("level{li}_rep{rep}.csv");
                std::fs::write(case_dir.join(&name), trace.to_csv())?;
                files.push(name);
            }
            levels.push(LevelEntry { u_prime_mps: Some(u), pressure_mpa: None, files });
        }
        Manifest {
            case_id: case.label.clone(),
            fuel: "CH4".into(),
            phi: case.phi,
            temperature_k: case.temperature_k,
            pressure_mpa: case.pressure_mpa,
            data_format: "flame_trace".into(),
            target: "a3d_m2".into(),
            level: levels,
        }
        .save(&case_dir)?;
        total += traces.len();
    }
    trend.save(&out_dir.join("truth_trend.json")).map_err(anyhow::Error::from)?;
    println!(
        "synth: wrote {total} flame traces across {} cases to {}",
        s.case.len(),
        out_dir.display()
    );
    Ok(())
}

fn synth_flame(cfg: &RunConfig, out_dir: &Path, time_grid: &[f64]) -> anyhow::Result<()> {
    let s = &cfg.synth;
    let refk = CondKey { temperature_k: s.temperature_k, pressure_mpa: s.pressure_mpa };
    let trend = TrendModel {
        version: TREND_MODEL_VERSION,
        name: "synthetic-flame-truth".into(),
        target: "a3d_m2".into(),
        kind: TrendKind::HierarchicalLogQuad {
            base: [
                quadratic_surface(&s.trend_a0),
                quadratic_surface(&s.trend_a1),
                quadratic_surface(&s.trend_a2),
            ],
            thermo: ThermoCorrection::none(refk),
        },
        validity: vec![
            AxisRange { name: "t".into(), min: s.t_min, max: s.t_max },
            AxisRange {
                name: "u_prime".into(),
                min: s.u_prime_levels.iter().cloned().fold(f64::INFINITY, f64::min),
                max: s.u_prime_levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        ],
        provenance: "synthetic generator".into(),
    };

    let conditions: Vec<CaseCondition> = s
        .u_prime_levels
        .iter()
        .map(|&u| CaseCondition {
            fuel: Fuel::H2,
            case_id: "synthetic-flame".into(),
            phi: s.phi,
            temperature_k: s.temperature_k,
            pressure_mpa: s.pressure_mpa,
            u_prime_mps: u,
        })
        .collect();
    let spec = SyntheticFlameSpec {
        trend: trend.clone(),
        perturbation: Perturbation { amplitude: s.perturbation_amplitude, u_freq: s.perturbation_freq },
        noise_std: s.noise_std,
        seed: cfg.seed,
        replicates: s.replicates,
    };
    let (traces, truth) = generate_flame_case(&spec, &conditions, time_grid)
        .map_err(anyhow::Error::from)?;

    let mut levels = Vec::new();
    for (li, &u) in s.u_prime_levels.iter().enumerate() {
        let mut files = Vec::new();
        for rep in 0..s.replicates {
            let trace = &traces[li * s.replicates + rep];
            let name = format!("level{li}_rep{rep}.csv");
            std::fs::write(out_dir.join(&name), trace.to_csv())
                .with_context(|| format!("writing {name}"))?;
            files.push(name);
        }
        levels.push(LevelEntry { u_prime_mps: Some(u), pressure_mpa: None, files });
    }

    Manifest {
        case_id: "synthetic-flame".into(),
        fuel: "H2".into(),
        phi: s.phi,
        temperature_k: s.temperature_k,
        pressure_mpa: s.pressure_mpa,
        data_format: "flame_trace".into(),
        target: "a3d_m2".into(),
        level: levels,
    }
    .save(out_dir)?;
    truth.trend.save(&out_dir.join("truth_trend.json")).map_err(anyhow::Error::from)?;
    println!(
        "synth: wrote {} flame traces over {} levels to {}",
        traces.len(),
        s.u_prime_levels.len(),
        out_dir.display()
    );
    Ok(())
}

fn synth_pressure_radius(cfg: &RunConfig, out_dir: &Path, time_grid: &[f64]) -> anyhow::Result<()> {
    let s = &cfg.synth;
    let trend = TrendModel {
        version: TREND_MODEL_VERSION,
        name: "synthetic-sweep-truth".into(),
        target: "r3d_m".into(),
        kind: TrendKind::PressureLinear {
            pressures_mpa: s.pressure_levels.clone(),
            slopes: s
                .pressure_levels
                .iter()
                .map(|&p| s.sweep_slope[0] + s.sweep_slope[1] * p)
                .collect(),
            intercepts: s
                .pressure_levels
                .iter()
                .map(|&p| s.sweep_intercept[0] + s.sweep_intercept[1] * p)
                .collect(),
        },
        validity: vec![
            AxisRange { name: "t".into(), min: s.t_min, max: s.t_max },
            AxisRange {
                name: "pressure".into(),
                min: s.pressure_levels.iter().cloned().fold(f64::INFINITY, f64::min),
                max: s.pressure_levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            },
        ],
        provenance: "synthetic generator".into(),
    };

    let conditions: Vec<CaseCondition> = s
        .pressure_levels
        .iter()
        .map(|&p| CaseCondition {
            fuel: Fuel::H2,
            case_id: "synthetic-sweep".into(),
            phi: s.phi,
            temperature_k: s.temperature_k,
            pressure_mpa: p,
            u_prime_mps: 0.0,
        })
        .collect();
    let spec = SyntheticFlameSpec {
        trend: trend.clone(),
        perturbation: Perturbation::zero(),
        noise_std: s.noise_std,
        seed: cfg.seed,
        replicates: s.replicates,
    };
    let (traces, truth) = generate_flame_case(&spec, &conditions, time_grid)
        .map_err(anyhow::Error::from)?;

    let mut levels = Vec::new();
    for (li, &p) in s.pressure_levels.iter().enumerate() {
        let mut files = Vec::new();
        for rep in 0..s.replicates {
            let trace = &traces[li * s.replicates + rep];
            let name = format!("p{li}_rep{rep}.csv");
            std::fs::write(out_dir.join(&name), trace.to_csv())?;
            files.push(name);
        }
        levels.push(LevelEntry { u_prime_mps: None, pressure_mpa: Some(p), files });
    }
    Manifest {
        case_id: "synthetic-sweep".into(),
        fuel: "H2".into(),
        phi: s.phi,
        temperature_k: s.temperature_k,
        pressure_mpa: s.pressure_levels[0],
        data_format: "flame_trace".into(),
        target: "r3d_m".into(),
        level: levels,
    }
    .save(out_dir)?;
    truth.trend.save(&out_dir.join("truth_trend.json")).map_err(anyhow::Error::from)?;
    println!(
        "synth: wrote {} radius traces over {} pressure levels to {}",
        traces.len(),
        s.pressure_levels.len(),
        out_dir.display()
    );
    Ok(())
}

/// Raw chamber-pressure signals with a smooth sigmoid rise and mild
/// noise, one per u' level, for exercising the measurement pipeline.
fn synth_pressure_trace(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<()> {
    use rand::Rng;
    let s = &cfg.synth;
    let meta = TraceMeta { p0_mpa: 0.1, pf_mpa: 0.8, gamma_u: 1.4, r0_m: 0.19 };
    let n = 1500;
    let mut levels = Vec::new();
    for (li, &u) in s.u_prime_levels.iter().enumerate() {
        let mut rng = rand_seed(cfg.seed, li as u64);
        // Higher turbulence burns faster: steeper rise.
        let rate = 0.006 / (1.0 + 0.5 * u);
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 1e-4).collect();
        let p: Vec<f64> = t
            .iter()
            .map(|&x| {
                let sig = 1.0 / (1.0 + (-(x - 0.07) / rate).exp());
                meta.p0_mpa
                    + (meta.pf_mpa - meta.p0_mpa) * sig
                    + s.noise_std * 0.01 * (2.0 * rng.random::<f64>() - 1.0)
            })
            .collect();
        let trace = PressureTrace::new(t, p, meta).map_err(anyhow::Error::from)?;
        let csv = format!("pressure_u{li}.csv");
        let side = format!("pressure_u{li}.meta.toml");
        write_pressure_csv(&trace, &out_dir.join(&csv)).map_err(anyhow::Error::from)?;
        write_meta_sidecar(&meta, &out_dir.join(&side)).map_err(anyhow::Error::from)?;
        levels.push(LevelEntry { u_prime_mps: Some(u), pressure_mpa: None, files: vec![csv] });
    }
    Manifest {
        case_id: "synthetic-pressure".into(),
        fuel: "H2".into(),
        phi: s.phi,
        temperature_k: s.temperature_k,
        pressure_mpa: meta.p0_mpa,
        data_format: "pressure_trace".into(),
        target: "utm_mps".into(),
        level: levels,
    }
    .save(out_dir)?;
    println!(
        "synth: wrote {} pressure traces to {}",
        s.u_prime_levels.len(),
        out_dir.display()
    );
    Ok(())
}

fn rand_seed(seed: u64, salt: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15))
}
