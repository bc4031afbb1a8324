//! CSV and JSON emission. CSVs hold only the data columns; the resolved
//! configuration and summary metrics go into a JSON file next to them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::figures::{deepest_minima, Fig1Output, Fig2Output, Fig3Output, SumSeOutput};
use crate::analysis::{self, FitExport};
use crate::error::Result;

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = BufWriter::new(File::create(&path)?);
    Ok((path, file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize, M: Serialize> {
    figure: &'a str,
    config: &'a C,
    resolved: &'a R,
    metrics: M,
}

fn case_name(frac: f64) -> String {
    format!("rf{frac:.4}").replace('.', "p")
}

/// `fig1_<case>.csv` (sample_value, in wavelengths), `fig1_<case>_fit.json`, `fig1.json`.
pub fn write_fig1(dir: &Path, out: &Fig1Output) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let mut metrics = Vec::new();
    for case in &out.cases {
        let name = case_name(case.r_over_rf);
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("fig1_{name}.csv"));
        analysis::write_samples_csv(&path, &case.samples_over_lambda)?;
        paths.push(path);
        let fit = FitExport { mu: case.fit.shape, nu: case.fit.scale, eta: None, exponent: None };
        let fit_path = dir.join(format!("fig1_{name}_fit.json"));
        analysis::write_fit_json(&fit_path, &fit)?;
        paths.push(fit_path);
        metrics.push(serde_json::json!({
            "r_over_rf": case.r_over_rf,
            "sample_unit": "wavelengths",
            "r_true_over_lambda": case.r_true_over_lambda,
            "mean_over_lambda": case.mean_over_lambda,
            "mean_relative_error": case.mean_over_lambda / case.r_true_over_lambda - 1.0,
            "variance_over_lambda_sq": case.variance_over_lambda_sq,
            "m_bound": case.m_bound,
            "share_selected_at_bound": case.share_at_bound(),
            "invalid_draws": case.n_invalid,
            "gamma": case.fit,
        }));
    }
    paths.push(write_json(
        dir,
        "fig1.json",
        &Summary { figure: "fig1", config: &out.config, resolved: &out.resolved, metrics },
    )?);
    Ok(paths)
}

/// `fig2_n<N>.csv` (r_m,variance,eta_fit,exponent_fit) per array size, `fig2.json`.
pub fn write_fig2(dir: &Path, out: &Fig2Output) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let mut metrics = Vec::new();
    for s in &out.series {
        let (path, mut f) = create(dir, &format!("fig2_n{}.csv", s.n_antennas))?;
        writeln!(f, "r_m,variance,eta_fit,exponent_fit")?;
        for p in &s.points {
            writeln!(f, "{},{},{},{}", p.r_m, p.variance, s.fit.eta, s.fit.exponent)?;
        }
        f.flush()?;
        paths.push(path);
        let first = s.points.first().map(|p| p.variance).unwrap_or(f64::NAN);
        let last = s.points.last().map(|p| p.variance).unwrap_or(f64::NAN);
        metrics.push(serde_json::json!({
            "n_antennas": s.n_antennas,
            "fit": s.fit,
            "variance_ratio_last_first": last / first,
            "points": s.points,
        }));
    }
    let resolved: Vec<_> = out.series.iter().map(|s| &s.resolved).collect();
    paths.push(write_json(
        dir,
        "fig2.json",
        &Summary { figure: "fig2", config: &out.config, resolved: &resolved, metrics },
    )?);
    Ok(paths)
}

/// Seed-level outcome of the interference-spectrum checks at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig3SnrMetrics {
    pub snr_db: f64,
    /// Seeds whose two deepest minima fall within 2% of r₁ and r₂.
    pub seeds_both_resolved: usize,
    /// Seeds with neither of the two deepest minima within 5% of r₂.
    pub seeds_far_user_missed: usize,
    pub seeds: usize,
}

pub fn fig3_metrics(out: &Fig3Output) -> Vec<Fig3SnrMetrics> {
    let r1 = out.resolved.users[0].r;
    let r2 = out.resolved.users[1].r;
    let near = |r: f64, target: f64, tol: f64| (r - target).abs() <= tol * target;
    out.snr_db
        .iter()
        .enumerate()
        .map(|(p, &snr)| {
            let mut both = 0;
            let mut missed = 0;
            for seed in &out.seeds {
                let mins: Vec<f64> =
                    deepest_minima(&seed.curves[p], 2).iter().map(|(i, _)| out.r_values[*i]).collect();
                if mins.iter().any(|&r| near(r, r1, 0.02)) && mins.iter().any(|&r| near(r, r2, 0.02)) {
                    both += 1;
                }
                if !mins.iter().any(|&r| near(r, r2, 0.05)) {
                    missed += 1;
                }
            }
            Fig3SnrMetrics { snr_db: snr, seeds_both_resolved: both, seeds_far_user_missed: missed, seeds: out.seeds.len() }
        })
        .collect()
}

/// `fig3.csv` (snr_db,r_m,inv_spectrum) for the first seed, `fig3.json`.
pub fn write_fig3(dir: &Path, out: &Fig3Output) -> Result<Vec<PathBuf>> {
    let (path, mut f) = create(dir, "fig3.csv")?;
    writeln!(f, "snr_db,r_m,inv_spectrum")?;
    if let Some(seed) = out.seeds.first() {
        for (p, snr) in out.snr_db.iter().enumerate() {
            for (r, v) in out.r_values.iter().zip(&seed.curves[p]) {
                writeln!(f, "{snr},{r},{v}")?;
            }
        }
    }
    f.flush()?;
    let summary = write_json(
        dir,
        "fig3.json",
        &Summary { figure: "fig3", config: &out.config, resolved: &out.resolved, metrics: fig3_metrics(out) },
    )?;
    Ok(vec![path, summary])
}

/// Sum-SE table with the given x column (`snr_db` or `fc_hz`) plus a JSON summary.
pub fn write_sum_se(dir: &Path, stem: &str, x_column: &str, out: &SumSeOutput) -> Result<Vec<PathBuf>> {
    let (path, mut f) = create(dir, &format!("{stem}.csv"))?;
    writeln!(f, "{x_column},strategy,sum_se,stderr")?;
    for row in &out.rows {
        writeln!(f, "{},{},{},{}", row.x, row.strategy.label(), row.sum_se.mean, row.sum_se.stderr)?;
    }
    f.flush()?;
    let metrics = serde_json::json!({
        "rows": out.rows.iter().map(|r| serde_json::json!({
            "x": r.x, "strategy": r.strategy.label(), "sum_se": r.sum_se.mean,
            "stderr": r.sum_se.stderr, "trials": r.sum_se.count,
        })).collect::<Vec<_>>(),
        "nlos_to_los_user1": out.nlos_to_los,
    });
    let summary = write_json(
        dir,
        &format!("{stem}.json"),
        &Summary { figure: stem, config: &out.config, resolved: &out.resolved, metrics },
    )?;
    Ok(vec![path, summary])
}

pub fn write_fig4(dir: &Path, out: &SumSeOutput) -> Result<Vec<PathBuf>> {
    write_sum_se(dir, "fig4", "snr_db", out)
}

pub fn write_fig5(dir: &Path, out: &SumSeOutput) -> Result<Vec<PathBuf>> {
    write_sum_se(dir, "fig5", "fc_hz", out)
}
