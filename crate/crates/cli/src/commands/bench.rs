//! Benchmark suites against the pinned acceptance thresholds. Any miss
//! exits nonzero with the numerical-failure code.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::bail;

use mufinn::bench::{
    flame_scenarios, pressure_sweep_masks, run_flame_holdout, run_forrester, run_pressure_sweep,
    FlameHoldoutConfig, ForresterConfig, PressureSweepConfig, FORRESTER_IMPROVEMENT_MIN,
    FORRESTER_RMSE_MAX, PRESSURE_SLOPE_REL_TOL,
};
use mufinn::model::CompoundLossConfig;

use crate::config::RunConfig;

use super::ensure_dir;

const SUITES: [&str; 3] = ["forrester", "flame_holdout", "pressure_sweep"];

pub fn run(cfg: &RunConfig, out_dir: &Path, list: bool, seed: Option<u64>) -> anyhow::Result<()> {
    if list {
        for s in SUITES {
            println!("{s}");
        }
        return Ok(());
    }
    ensure_dir(out_dir)?;

    let lambda = cfg.bench.lambda_override;
    let mut report = String::from("benchmark report\n================\n");
    let mut failures = Vec::new();

    for suite in &cfg.bench.suites {
        match suite.as_str() {
            "forrester" => {
                let mut fc = ForresterConfig::default();
                if let Some(s) = seed {
                    fc.seed = s;
                }
                if let Some(l) = lambda {
                    fc.loss = CompoundLossConfig { lambda_lf: l, lambda_hf_nl: l };
                }
                let out = run_forrester(&fc).map_err(anyhow::Error::from)?;
                let ok = out.mf_rmse_norm < FORRESTER_RMSE_MAX
                    && out.improvement >= FORRESTER_IMPROVEMENT_MIN;
                let line = format!(
                    "{} forrester: test RMSE {:.4} (< {FORRESTER_RMSE_MAX}), improvement {:.1}x (>= {FORRESTER_IMPROVEMENT_MIN}x), digest {}",
                    pass_str(ok),
                    out.mf_rmse_norm,
                    out.improvement,
                    &out.model_digest[..16],
                );
                println!("{line}");
                let _ = writeln!(report, "{line}");
                if !ok {
                    failures.push(format!(
                        "forrester: rmse {:.4}, improvement {:.1}x",
                        out.mf_rmse_norm, out.improvement
                    ));
                }
            }
            "flame_holdout" => {
                for scenario in flame_scenarios() {
                    let mut fc = FlameHoldoutConfig::default();
                    if let Some(s) = seed {
                        fc.seed = s;
                    }
                    if let Some(l) = lambda {
                        fc.loss = CompoundLossConfig { lambda_lf: l, lambda_hf_nl: l };
                    }
                    let out = run_flame_holdout(scenario, &fc).map_err(anyhow::Error::from)?;
                    let ok = out.ratio <= out.threshold;
                    let line = format!(
                        "{} flame_holdout {}: test/train RMSE ratio {:.2} (<= {})",
                        pass_str(ok),
                        out.scenario,
                        out.ratio,
                        out.threshold
                    );
                    println!("{line}");
                    let _ = writeln!(report, "{line}");
                    if !ok {
                        failures.push(format!("flame {}: ratio {:.2}", out.scenario, out.ratio));
                    }
                }
            }
            "pressure_sweep" => {
                for mask in pressure_sweep_masks() {
                    let mut pc = PressureSweepConfig::default();
                    if let Some(s) = seed {
                        pc.seed = s;
                    }
                    if let Some(l) = lambda {
                        pc.loss = CompoundLossConfig { lambda_lf: l, lambda_hf_nl: l };
                    }
                    let out = run_pressure_sweep(&mask, &pc).map_err(anyhow::Error::from)?;
                    let ok = out.max_rel_error <= PRESSURE_SLOPE_REL_TOL;
                    let line = format!(
                        "{} pressure_sweep mask {:?} MPa: worst slope error {:.2}% (<= {:.0}%)",
                        pass_str(ok),
                        mask,
                        100.0 * out.max_rel_error,
                        100.0 * PRESSURE_SLOPE_REL_TOL
                    );
                    println!("{line}");
                    let _ = writeln!(report, "{line}");
                    if !ok {
                        failures.push(format!(
                            "pressure mask {:?}: slope error {:.2}%",
                            mask,
                            100.0 * out.max_rel_error
                        ));
                    }
                }
            }
            other => bail!("unknown benchmark suite `{other}` (available: {SUITES:?})"),
        }
    }

    std::fs::write(out_dir.join("bench_report.txt"), &report)?;
    if !failures.is_empty() {
        return Err(mufinn::Error::Threshold(failures.join("; ")).into());
    }
    println!("bench: all thresholds met");
    Ok(())
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
