//! Monte-Carlo sum-SE trials: channel draw, pilot training, localization and
//! combining for every strategy and operating point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{NoiseMode, ResolvedScenario, ScenarioConfig, Strategy};
use super::seeds::{derive_key, tags, trial_rng};
use crate::beamfocus::{self, BasisKind, SeReport};
use crate::channel::{draw_clusters, realize_channel, Cluster};
use crate::error::{Error, Result};
use crate::geometry::{CarrierConfig, PolarLocation, UlaGeometry};
use crate::music::{self, MusicGrid, SubspacePair};
use crate::signaling::{self, PilotBook};

/// Everything a trial needs that does not depend on the random draws.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub config: ScenarioConfig,
    pub resolved: ResolvedScenario,
    pub carrier: CarrierConfig,
    pub geom: UlaGeometry,
    pub loc_pilots: PilotBook,
    pub pil_pilots: Option<PilotBook>,
    /// One grid per localization strategy, in strategy order.
    pub grids: Vec<Option<MusicGrid>>,
    pub frozen_clusters: Option<Vec<Cluster>>,
    pub tag: u64,
}

impl TrialSetup {
    pub fn new(config: &ScenarioConfig, tag: u64) -> Result<Self> {
        let resolved = config.resolve()?;
        let carrier = config.carrier()?;
        let geom = config.geometry()?;
        let k = resolved.users.len();
        if k >= geom.n_antennas() {
            return Err(Error::InvalidParameter("need fewer users than antennas".into()));
        }
        let loc_pilots = signaling::dft_pilot_book(resolved.tau_loc, k)?;
        let pil_pilots = if config.strategies.contains(&Strategy::PilotZf) {
            Some(signaling::dft_pilot_book(resolved.tau_pil, k)?)
        } else {
            None
        };
        let grids = config
            .strategies
            .iter()
            .map(|s| match s {
                Strategy::Localization { r_step_wavelengths } => MusicGrid::default_region(
                    &carrier,
                    &geom,
                    r_step_wavelengths * carrier.wavelength(),
                    config.theta_step_deg,
                )
                .map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let frozen_clusters = if config.freeze_clusters {
            let mut rng = trial_rng(config.seed, tags::FROZEN_CLUSTERS, 0);
            Some(draw_clusters(config.clusters, &resolved.users, &carrier, &mut rng)?)
        } else {
            None
        };
        Ok(Self { config: config.clone(), resolved, carrier, geom, loc_pilots, pil_pilots, grids, frozen_clusters, tag })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub point_index: usize,
    pub report: SeReport,
    /// Localization estimates ordered by user, when the strategy localizes.
    pub estimates: Option<Vec<PolarLocation>>,
    /// |r̂ - r| per user.
    pub distance_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// ChaCha key seed; the stream id is the trial index.
    pub seed: u64,
    /// Scattered-to-LoS power ratio of user 1 in this draw.
    pub nlos_to_los: f64,
    pub outcomes: Vec<StrategyOutcome>,
    pub elapsed_ms: f64,
}

impl TrialRecord {
    pub fn outcome(&self, strategy: &Strategy, point: usize) -> Option<&StrategyOutcome> {
        self.outcomes.iter().find(|o| &o.strategy == strategy && o.point_index == point)
    }
}

fn subspaces_for(y: &DMatrix<Complex64>, tau: usize, k: usize) -> Result<SubspacePair> {
    music::hermitian_eigendecomposition(&music::sample_covariance(y, tau)?, k)
}

/// Runs one trial with its own substream.
pub fn evaluate_trial(setup: &TrialSetup, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let cfg = &setup.config;
    let res = &setup.resolved;
    let mut rng = trial_rng(cfg.seed, setup.tag, trial);
    let draw = draw_realization(setup, &mut rng)?;
    let channels = &draw.channels;
    let (n, k) = (setup.geom.n_antennas(), res.users.len());
    let noise_loc = signaling::complex_gaussian_matrix(n, res.tau_loc, res.sigma_sq, &mut rng);
    let noise_pil = setup
        .pil_pilots
        .as_ref()
        .map(|p| signaling::complex_gaussian_matrix(n, p.length(), res.sigma_sq, &mut rng));

    let mut outcomes = Vec::new();
    let mut subspaces = Vec::with_capacity(res.points.len());
    for point in &res.points {
        let y = signaling::noiseless_pilot_matrix(channels, &setup.loc_pilots, &point.powers)? + &noise_loc;
        subspaces.push(subspaces_for(&y, res.tau_loc, k)?);
    }

    for (s_idx, strategy) in cfg.strategies.iter().enumerate() {
        match strategy {
            Strategy::PerfectCsi | Strategy::PerfectLocalization => {
                let (w, overhead) = if *strategy == Strategy::PerfectCsi {
                    (beamfocus::zf_combiner(channels, BasisKind::PerfectCsi)?, 0)
                } else {
                    let basis = beamfocus::steering_basis(&res.users, &setup.carrier, &setup.geom);
                    (beamfocus::zf_combiner(&basis, BasisKind::PerfectLocalization)?, 0)
                };
                for (p, point) in res.points.iter().enumerate() {
                    let s = beamfocus::sinrs(&w, channels, &point.powers, res.sigma_sq)?;
                    outcomes.push(StrategyOutcome {
                        strategy: *strategy,
                        point_index: p,
                        report: beamfocus::sum_se(&s, overhead, res.coherence)?,
                        estimates: None,
                        distance_errors: None,
                    });
                }
            }
            Strategy::PilotZf => {
                let book = setup.pil_pilots.as_ref().expect("pilot book built for pilot strategy");
                let noise = noise_pil.as_ref().expect("pilot noise drawn");
                for (p, point) in res.points.iter().enumerate() {
                    let y = signaling::noiseless_pilot_matrix(channels, book, &point.powers)? + noise;
                    let est = signaling::ls_estimate_all(&y, book, &point.powers)?;
                    let w = beamfocus::zf_combiner(&est, BasisKind::PilotLs)?;
                    let s = beamfocus::sinrs(&w, channels, &point.powers, res.sigma_sq)?;
                    outcomes.push(StrategyOutcome {
                        strategy: *strategy,
                        point_index: p,
                        report: beamfocus::sum_se(&s, book.length(), res.coherence)?,
                        estimates: None,
                        distance_errors: None,
                    });
                }
            }
            Strategy::Localization { .. } => {
                let grid = setup.grids[s_idx].as_ref().expect("grid built for localization strategy");
                let spectra = music::music_spectrum_batch(&subspaces, grid, &setup.carrier, &setup.geom)?;
                for (p, (spectrum, point)) in spectra.into_iter().zip(&res.points).enumerate() {
                    let located = music::locate_users(spectrum, grid, &res.users, cfg.peak_separation)?;
                    let estimates = located.estimates_by_user();
                    let w = beamfocus::localization_combiner(&estimates, &setup.carrier, &setup.geom)?;
                    let s = beamfocus::sinrs(&w, channels, &point.powers, res.sigma_sq)?;
                    let errors = estimates.iter().zip(&res.users).map(|(e, u)| (e.r - u.r).abs()).collect();
                    outcomes.push(StrategyOutcome {
                        strategy: *strategy,
                        point_index: p,
                        report: beamfocus::sum_se(&s, res.tau_loc, res.coherence)?,
                        estimates: Some(estimates),
                        distance_errors: Some(errors),
                    });
                }
            }
        }
    }
    Ok(TrialRecord {
        trial,
        seed: derive_key(cfg.seed, setup.tag),
        nlos_to_los: draw.nlos_to_los,
        outcomes,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub struct Draw {
    pub channels: DMatrix<Complex64>,
    pub nlos_to_los: f64,
}

/// Clusters (unless frozen), then fading, then normalization when enabled.
pub fn draw_realization<R: Rng + ?Sized>(setup: &TrialSetup, rng: &mut R) -> Result<Draw> {
    let res = &setup.resolved;
    let clusters = match &setup.frozen_clusters {
        Some(c) => c.clone(),
        None => draw_clusters(setup.config.clusters, &res.users, &setup.carrier, rng)?,
    };
    let mut real = realize_channel(&res.users, &clusters, &setup.carrier, &setup.geom, rng)?;
    if setup.config.noise_mode == NoiseMode::Normalized {
        real = real.normalize(0)?;
    }
    let nlos_to_los = real.nlos_to_los_ratio(&setup.carrier, 0);
    Ok(Draw { channels: real.channels, nlos_to_los })
}

/// Runs `0..trials` in parallel; results come back in trial order and the
/// first failing trial (by index) decides the error.
pub fn run_indexed<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..trials).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

pub fn run_trials(config: &ScenarioConfig, tag: u64) -> Result<(TrialSetup, Vec<TrialRecord>)> {
    let setup = TrialSetup::new(config, tag)?;
    let records = run_indexed(config.trials, |t| evaluate_trial(&setup, t))?;
    Ok((setup, records))
}

pub use rayon::ThreadPool;

/// Dedicated worker pool; results do not depend on its size.
pub fn thread_pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Spectrum of the first localization strategy at the first operating point
/// of trial `trial`, written as `run_spectrum.csv` (r_m,theta_deg,spectrum_value).
/// Returns `None` when no localization strategy is configured.
pub fn write_trial_spectrum(config: &ScenarioConfig, trial: usize, dir: &Path) -> Result<Option<PathBuf>> {
    let setup = TrialSetup::new(config, tags::SUM_SE)?;
    let Some(grid) = setup.grids.iter().flatten().next() else {
        return Ok(None);
    };
    let Some(point) = setup.resolved.points.first() else {
        return Ok(None);
    };
    let res = &setup.resolved;
    let mut rng = trial_rng(config.seed, setup.tag, trial);
    let draw = draw_realization(&setup, &mut rng)?;
    let noise = signaling::complex_gaussian_matrix(setup.geom.n_antennas(), res.tau_loc, res.sigma_sq, &mut rng);
    let y = signaling::noiseless_pilot_matrix(&draw.channels, &setup.loc_pilots, &point.powers)? + noise;
    let sub = subspaces_for(&y, res.tau_loc, res.users.len())?;
    let spectrum = music::music_spectrum(&sub, grid, &setup.carrier, &setup.geom)?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join("run_spectrum.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    music::write_spectrum_csv(&mut f, grid, &spectrum)?;
    f.flush()?;
    Ok(Some(path))
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate { mean: f64::NAN, stderr: f64::NAN, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, stderr, count: n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeSummaryRow {
    /// SNR in dB or carrier frequency in Hz.
    pub x: f64,
    pub strategy: Strategy,
    pub sum_se: Aggregate,
}

/// Mean sum-SE per (operating point, strategy), point-major.
pub fn summarize(setup: &TrialSetup, records: &[TrialRecord]) -> Vec<SeSummaryRow> {
    let mut rows = Vec::new();
    for (p, point) in setup.resolved.points.iter().enumerate() {
        for strategy in &setup.config.strategies {
            let values: Vec<f64> = records
                .iter()
                .filter_map(|r| r.outcome(strategy, p).map(|o| o.report.sum_se))
                .collect();
            rows.push(SeSummaryRow { x: point.label, strategy: *strategy, sum_se: aggregate(&values) });
        }
    }
    rows
}
