//! Figure reproductions: closed-form histograms, variance law, interference
//! spectrum, and the sum-SE sweeps over SNR and carrier frequency.

use serde::{Deserialize, Serialize};

use super::config::{NoiseMode, ResolvedScenario, ScenarioConfig};
use super::seeds::{tags, trial_rng};
use super::trials::{aggregate, run_indexed, run_trials, summarize, Aggregate, SeSummaryRow};
use crate::analysis::{self, GammaFit, NoiseVectorPhases, PowerLawFit};
use crate::channel::{draw_clusters, realize_channel};
use crate::error::{Error, Result};
use crate::geometry::{CarrierConfig, PolarLocation, UlaGeometry};
use crate::music::{self, MusicGrid, SteeringTable, SubspacePair};
use crate::signaling;

/// Single-user (or multi-user) snapshot analysis at one operating point:
/// draws a normalized channel, `snapshots` noisy pilot columns and returns
/// the eigendecomposition of the sample covariance for each SNR. The noise
/// draw is shared across SNRs.
fn snapshot_subspaces(
    cfg: &ScenarioConfig,
    users: &[PolarLocation],
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
    tag: u64,
    trial: usize,
) -> Result<Vec<SubspacePair>> {
    let mut rng = trial_rng(cfg.seed, tag, trial);
    let clusters = draw_clusters(cfg.clusters, users, carrier, &mut rng)?;
    let real = realize_channel(users, &clusters, carrier, geom, &mut rng)?.normalize(0)?;
    let tau = cfg.analysis_snapshots;
    let k = users.len();
    let book = signaling::dft_pilot_book(tau, k)?;
    let noise = signaling::complex_gaussian_matrix(geom.n_antennas(), tau, 1.0, &mut rng);
    cfg.snr_db
        .iter()
        .map(|snr| {
            let powers = vec![10f64.powf(snr / 10.0); k];
            let y = signaling::noiseless_pilot_matrix(&real.channels, &book, &powers)? + &noise;
            music::hermitian_eigendecomposition(&music::sample_covariance(&y, tau)?, k)
        })
        .collect()
}

fn require_normalized(cfg: &ScenarioConfig, fig: &str) -> Result<()> {
    if cfg.noise_mode != NoiseMode::Normalized {
        return Err(Error::InvalidParameter(format!("{fig} runs in normalized noise mode")));
    }
    if cfg.snr_db.is_empty() {
        return Err(Error::InvalidParameter(format!("{fig} needs at least one SNR")));
    }
    Ok(())
}

// ---------------------------------------------------------------- Fig. 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Case {
    pub r_over_rf: f64,
    pub r_true_m: f64,
    pub r_true_over_lambda: f64,
    pub m_bound: i64,
    /// Estimates in wavelengths, in trial order (invalid draws skipped).
    pub samples_over_lambda: Vec<f64>,
    pub selected_m: Vec<i64>,
    /// Trials where no candidate M gave a valid distance.
    pub n_invalid: usize,
    pub fit: GammaFit,
    pub mean_over_lambda: f64,
    pub variance_over_lambda_sq: f64,
}

impl Fig1Case {
    pub fn share_at_bound(&self) -> f64 {
        let hits = self.selected_m.iter().filter(|&&m| m == self.m_bound).count();
        hits as f64 / (self.selected_m.len() + self.n_invalid).max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Output {
    pub config: ScenarioConfig,
    pub resolved: ResolvedScenario,
    pub cases: Vec<Fig1Case>,
}

fn check_fig1(cfg: &ScenarioConfig) -> Result<()> {
    require_normalized(cfg, "fig1")?;
    if cfg.n_antennas != 2 || cfg.users.len() != 1 {
        return Err(Error::InvalidParameter("fig1 needs N = 2 and K = 1".into()));
    }
    if cfg.sweep_r_over_rf.is_empty() {
        return Err(Error::InvalidParameter("fig1 needs at least one distance".into()));
    }
    Ok(())
}

/// Noise-eigenvector phases of one two-antenna draw at the first SNR, for
/// sweep case `case`.
pub fn fig1_phases(cfg: &ScenarioConfig, case: usize, trial: usize) -> Result<NoiseVectorPhases> {
    check_fig1(cfg)?;
    let carrier = cfg.carrier()?;
    let geom = cfg.geometry()?;
    let rf = crate::geometry::fraunhofer_distance(&geom, &carrier);
    let user = PolarLocation::from_degrees(cfg.sweep_r_over_rf[case] * rf, cfg.users[0].theta_deg)?;
    let subs = snapshot_subspaces(cfg, &[user], &carrier, &geom, tags::case(tags::FIG1, case), trial)?;
    NoiseVectorPhases::from_vector(&subs[0].eigenvectors.column(1).into_owned())
}

pub fn run_fig1(cfg: &ScenarioConfig) -> Result<Fig1Output> {
    check_fig1(cfg)?;
    let resolved = cfg.resolve()?;
    let carrier = cfg.carrier()?;
    let geom = cfg.geometry()?;
    let lambda = carrier.wavelength();
    let theta = cfg.users[0].theta_deg.to_radians();
    let d = geom.spacing();
    let mut cases = Vec::new();
    for (c, &frac) in cfg.sweep_r_over_rf.iter().enumerate() {
        let draws = run_indexed(cfg.trials, |t| {
            let phases = fig1_phases(cfg, c, t)?;
            match analysis::select_m(&phases, theta, d, &carrier, cfg.m_search_width) {
                Ok(v) => Ok(Some(v)),
                Err(Error::NoValidCandidate) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let valid: Vec<(i64, f64)> = draws.iter().flatten().copied().collect();
        let samples: Vec<f64> = valid.iter().map(|(_, r)| r / lambda).collect();
        let fit = analysis::gamma_fit(&samples)?;
        let (mean, var) = analysis::mean_variance(&samples)?;
        let r_true = frac * resolved.fraunhofer_m;
        cases.push(Fig1Case {
            r_over_rf: frac,
            r_true_m: r_true,
            r_true_over_lambda: r_true / lambda,
            m_bound: analysis::m_lower_bound(d, &carrier),
            selected_m: valid.iter().map(|(m, _)| *m).collect(),
            n_invalid: draws.len() - valid.len(),
            samples_over_lambda: samples,
            fit,
            mean_over_lambda: mean,
            variance_over_lambda_sq: var,
        });
    }
    Ok(Fig1Output { config: cfg.clone(), resolved, cases })
}

// ---------------------------------------------------------------- Fig. 2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Point {
    pub r_m: f64,
    pub mean_estimate_m: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Series {
    pub n_antennas: usize,
    pub resolved: ResolvedScenario,
    pub points: Vec<Fig2Point>,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Output {
    pub config: ScenarioConfig,
    pub series: Vec<Fig2Series>,
}

/// Distance estimate of one single-user draw by a 1-D spectrum search over
/// a window around the truth at the known angle.
fn fig2_estimate(
    cfg: &ScenarioConfig,
    user: &PolarLocation,
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
    table: &SteeringTable,
    tag: u64,
    trial: usize,
) -> Result<f64> {
    let subs = snapshot_subspaces(cfg, std::slice::from_ref(user), carrier, geom, tag, trial)?;
    let spectrum = music::music_spectrum_tabulated(table, &subs[0])?;
    let peaks = music::find_peaks(&spectrum, 1, cfg.peak_separation)?;
    Ok(table.grid.r_values[peaks[0].0])
}

pub fn run_fig2(cfg: &ScenarioConfig) -> Result<Fig2Output> {
    require_normalized(cfg, "fig2")?;
    if cfg.users.len() != 1 {
        return Err(Error::InvalidParameter("fig2 needs K = 1".into()));
    }
    if cfg.sweep_r_over_rf.len() < 2 {
        return Err(Error::InvalidParameter("fig2 needs at least two distances".into()));
    }
    let antennas = if cfg.sweep_antennas.is_empty() { vec![cfg.n_antennas] } else { cfg.sweep_antennas.clone() };
    let mut series = Vec::new();
    for (a, &n) in antennas.iter().enumerate() {
        let c = cfg.with_antennas(n);
        let resolved = c.resolve()?;
        let carrier = c.carrier()?;
        let geom = c.geometry()?;
        let theta = c.users[0].theta_deg.to_radians();
        let mut points = Vec::new();
        for (i, &frac) in c.sweep_r_over_rf.iter().enumerate() {
            let r = frac * resolved.fraunhofer_m;
            let user = PolarLocation::new(r, theta)?;
            let grid = MusicGrid::distance_only(
                r * (1.0 - c.window_fraction),
                r * (1.0 + c.window_fraction),
                c.fine_step_wavelengths * carrier.wavelength(),
                theta,
            )?;
            let table = SteeringTable::new(&grid, &carrier, &geom);
            let tag = tags::case(tags::case(tags::FIG2, a), i);
            let est = run_indexed(c.trials, |t| fig2_estimate(&c, &user, &carrier, &geom, &table, tag, t))?;
            let (mean, variance) = analysis::mean_variance(&est)?;
            points.push(Fig2Point { r_m: r, mean_estimate_m: mean, variance });
        }
        let rs: Vec<f64> = points.iter().map(|p| p.r_m).collect();
        let vs: Vec<f64> = points.iter().map(|p| p.variance).collect();
        let fit = analysis::variance_power_law_fit(&rs, &vs)?;
        series.push(Fig2Series { n_antennas: n, resolved, points, fit });
    }
    Ok(Fig2Output { config: cfg.clone(), series })
}

// ---------------------------------------------------------------- Fig. 3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Seed {
    pub trial: usize,
    /// One curve per SNR, aligned with `Fig3Output::r_values`.
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Output {
    pub config: ScenarioConfig,
    pub resolved: ResolvedScenario,
    pub r_values: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<Fig3Seed>,
}

/// Interior strict local minima, deepest first, as (index, value).
pub fn deepest_minima(values: &[f64], count: usize) -> Vec<(usize, f64)> {
    let mut minima: Vec<(usize, f64)> = (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .map(|i| (i, values[i]))
        .collect();
    minima.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    minima.truncate(count);
    minima
}

pub fn run_fig3(cfg: &ScenarioConfig) -> Result<Fig3Output> {
    require_normalized(cfg, "fig3")?;
    if cfg.n_antennas != 3 || cfg.users.len() != 2 {
        return Err(Error::InvalidParameter("fig3 needs N = 3 and K = 2".into()));
    }
    let resolved = cfg.resolve()?;
    let carrier = cfg.carrier()?;
    let geom = cfg.geometry()?;
    let lambda = carrier.wavelength();
    let theta = resolved.users[0].theta;
    let r_values = music::linspace_step(10.0 * lambda, resolved.fraunhofer_m, cfg.fine_step_wavelengths * lambda)?;
    let seeds = run_indexed(cfg.trials, |t| {
        let subs = snapshot_subspaces(cfg, &resolved.users, &carrier, &geom, tags::FIG3, t)?;
        let curves = subs
            .iter()
            .map(|s| {
                let phases = NoiseVectorPhases::from_vector(&s.eigenvectors.column(2).into_owned())?;
                r_values
                    .iter()
                    .map(|&r| analysis::denom_three_antenna(&phases, r, theta, geom.spacing(), &carrier))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fig3Seed { trial: t, curves })
    })?;
    Ok(Fig3Output { config: cfg.clone(), resolved, r_values, snr_db: cfg.snr_db.clone(), seeds })
}

// ---------------------------------------------------------------- Figs. 4, 5

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumSeOutput {
    pub config: ScenarioConfig,
    pub resolved: Vec<ResolvedScenario>,
    pub rows: Vec<SeSummaryRow>,
    /// Scattered-to-LoS power ratio of user 1, one per resolved scenario.
    pub nlos_to_los: Vec<Aggregate>,
}

pub fn run_fig4(cfg: &ScenarioConfig) -> Result<SumSeOutput> {
    require_normalized(cfg, "fig4")?;
    run_sum_se(cfg)
}

/// Sum-SE over the configured operating points of a single scenario.
pub fn run_sum_se(cfg: &ScenarioConfig) -> Result<SumSeOutput> {
    let (setup, records) = run_trials(cfg, tags::SUM_SE)?;
    let ratios: Vec<f64> = records.iter().map(|r| r.nlos_to_los).collect();
    Ok(SumSeOutput {
        config: cfg.clone(),
        rows: summarize(&setup, &records),
        resolved: vec![setup.resolved],
        nlos_to_los: vec![aggregate(&ratios)],
    })
}

/// Carrier sweep in physical noise mode; every frequency reuses the same
/// trial substreams.
pub fn run_fig5(cfg: &ScenarioConfig) -> Result<SumSeOutput> {
    if cfg.noise_mode != NoiseMode::Physical {
        return Err(Error::InvalidParameter("fig5 runs in physical noise mode".into()));
    }
    if cfg.fc_sweep_ghz.is_empty() {
        return Err(Error::InvalidParameter("fig5 needs at least one carrier frequency".into()));
    }
    let mut out = SumSeOutput { config: cfg.clone(), resolved: vec![], rows: vec![], nlos_to_los: vec![] };
    for &fc in &cfg.fc_sweep_ghz {
        let part = run_sum_se(&cfg.with_fc(fc))?;
        out.resolved.extend(part.resolved);
        out.rows.extend(part.rows);
        out.nlos_to_los.extend(part.nlos_to_los);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minima_ordering() {
        let v = [5.0, 1.0, 4.0, 0.5, 3.0, 3.0, 2.0, 9.0];
        assert_eq!(deepest_minima(&v, 2), vec![(3, 0.5), (1, 1.0)]);
        assert_eq!(deepest_minima(&v, 5).len(), 3);
        assert!(deepest_minima(&[1.0, 2.0], 1).is_empty());
    }

    #[test]
    fn fig1_rejects_wrong_geometry() {
        let cfg = ScenarioConfig { n_antennas: 3, ..ScenarioConfig::fig1() };
        assert_eq!(run_fig1(&cfg).unwrap_err().exit_code(), 1);
        assert!(run_fig3(&ScenarioConfig::fig1()).is_err());
        assert!(run_fig5(&ScenarioConfig::fig4()).is_err());
    }

    #[test]
    fn fig1_small_run() {
        let cfg = ScenarioConfig { trials: 50, ..ScenarioConfig::fig1() };
        let out = run_fig1(&cfg).unwrap();
        assert_eq!(out.cases.len(), 2);
        for c in &out.cases {
            assert_eq!(c.m_bound, 8);
            assert_eq!(c.samples_over_lambda.len() + c.n_invalid, 50);
            assert!((c.fit.mean() - c.mean_over_lambda).abs() < 1e-10 * c.mean_over_lambda);
        }
    }

    #[test]
    fn fig3_shapes() {
        let cfg = ScenarioConfig { trials: 2, fine_step_wavelengths: 1.0, ..ScenarioConfig::fig3() };
        let out = run_fig3(&cfg).unwrap();
        assert_eq!(out.seeds.len(), 2);
        assert_eq!(out.seeds[0].curves.len(), 3);
        assert!(out.seeds[0].curves.iter().all(|c| c.len() == out.r_values.len()));
    }
}
