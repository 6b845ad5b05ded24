//! The `theory` and `tabular-credit` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use revalued::agents::{run_credit_experiment, CreditCurve, CreditExperimentConfig};
use revalued::theory::{
    closed_form_target_moments, simulate_target_diff, spec_grid, verify_inequalities, NoiseModel, TargetMode,
};
use revalued::ActionSpaceSpec;

use crate::config::RunConfig;

/// Monte Carlo mean must lie within this many standard errors of the closed form.
pub const MC_MEAN_SIGMAS: f64 = 5.0;
/// Monte Carlo variance must lie within this relative distance of the closed form.
pub const MC_VAR_RTOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub mode: TargetMode,
    pub spec: ActionSpaceSpec,
    pub mean_cf: f64,
    pub var_cf: f64,
    /// Sample mean, sample variance and standard error when simulated.
    pub monte_carlo: Option<(f64, f64, f64)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheorySummary {
    pub rows: Vec<TheoryRow>,
    pub specs_checked: usize,
    pub closed_form_failures: usize,
    pub monte_carlo_failures: usize,
    pub csv_path: PathBuf,
}

fn sizes_field(spec: &ActionSpaceSpec) -> String {
    spec.sizes().iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
}

/// Closed-form sweep over the grid, Monte Carlo on the listed specs, and a
/// CSV with one row per (spec, mode).
pub fn run_theory(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<TheorySummary> {
    config.validate()?;
    let th = &config.theory;
    let noise = NoiseModel::new(th.b, th.gamma)?;
    let mut grid = spec_grid(th.dims[0]..=th.dims[1], th.sizes[0]..=th.sizes[1])?;
    for s in &th.monte_carlo_specs {
        let spec = ActionSpaceSpec::new(s.clone())?;
        if !grid.contains(&spec) {
            grid.push(spec);
        }
    }
    let reports = verify_inequalities(&grid, noise, th.k)?;
    let mc_specs: Vec<ActionSpaceSpec> =
        th.monte_carlo_specs.iter().map(|s| ActionSpaceSpec::new(s.clone())).collect::<revalued::Result<_>>()?;

    let mut rows = Vec::new();
    let (mut cf_failures, mut mc_failures) = (0, 0);
    for report in &reports {
        let cf_pass = report.passed();
        if !cf_pass {
            cf_failures += 1;
        }
        let simulate = mc_specs.contains(&report.spec);
        for (m, mode) in TargetMode::CLOSED_FORM.into_iter().enumerate() {
            let cf = closed_form_target_moments(&report.spec, noise, mode, th.k)?;
            let (monte_carlo, mc_pass) = if simulate {
                let stats = simulate_target_diff(&report.spec, noise, mode, th.k, th.trials, seed.wrapping_add(m as u64))?;
                let mean_ok = (stats.mean - cf.mean).abs() <= MC_MEAN_SIGMAS * stats.std_error_mean;
                let var_ok = (stats.variance - cf.variance).abs() <= MC_VAR_RTOL * cf.variance;
                (Some((stats.mean, stats.variance, stats.std_error_mean)), mean_ok && var_ok)
            } else {
                (None, true)
            };
            if !mc_pass {
                mc_failures += 1;
            }
            rows.push(TheoryRow {
                mode,
                spec: report.spec.clone(),
                mean_cf: cf.mean,
                var_cf: cf.variance,
                monte_carlo,
                pass: cf_pass && mc_pass,
            });
        }
    }

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("theory.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["mode", "N", "sizes", "b", "gamma", "K", "mean_cf", "var_cf", "mean_mc", "var_mc", "se", "pass"])?;
    for r in &rows {
        let (mean_mc, var_mc, se) = match r.monte_carlo {
            Some((m, v, s)) => (m.to_string(), v.to_string(), s.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.mode.name().to_string(),
            r.spec.num_dims().to_string(),
            sizes_field(&r.spec),
            th.b.to_string(),
            th.gamma.to_string(),
            th.k.to_string(),
            r.mean_cf.to_string(),
            r.var_cf.to_string(),
            mean_mc,
            var_mc,
            se,
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(TheorySummary {
        rows,
        specs_checked: reports.len(),
        closed_form_failures: cf_failures,
        monte_carlo_failures: mc_failures,
        csv_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditSummary {
    pub decqn: CreditCurve,
    pub revalued: CreditCurve,
    pub csv_paths: [PathBuf; 2],
}

/// Runs both tabular algorithms on shared random numbers and writes
/// `tabular_credit_decqn.csv` and `tabular_credit_revalued.csv`.
pub fn run_tabular_credit(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<CreditSummary> {
    config.validate()?;
    let t = &config.tabular;
    let experiment = CreditExperimentConfig { dims: t.dims, n: t.n, trials: t.trials, updates: t.updates, seed };
    let revalued_cfg = t.learning();
    let decqn_cfg = revalued::agents::TabularConfig { beta: 0.0, ..revalued_cfg };
    let decqn = run_credit_experiment(&experiment, &decqn_cfg)?;
    let revalued = run_credit_experiment(&experiment, &revalued_cfg)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let write = |name: &str, curve: &CreditCurve| -> Result<PathBuf> {
        let path = out_dir.join(format!("tabular_credit_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["update_idx", "frequency", "ci_half_width"])?;
        for p in &curve.points {
            w.write_record([p.update_idx.to_string(), p.frequency.to_string(), p.ci_half_width.to_string()])?;
        }
        w.flush()?;
        Ok(path)
    };
    let csv_paths = [write("decqn", &decqn)?, write("revalued", &revalued)?];
    Ok(CreditSummary { decqn, revalued, csv_paths })
}
