//! Scenario configuration, per-figure presets and derived quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fraunhofer_distance, CarrierConfig, PolarLocation, UlaGeometry};
use crate::signaling::{dbm_to_watts, noise_power_dbm, pilot_length};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// σ² = 1, channels scaled by 1/‖h_1‖, transmit power given by the SNR list.
    Normalized,
    /// σ² from noise figure and bandwidth, transmit power from `tx_power_dbm`.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    /// Distance as a fraction of the Fraunhofer distance.
    pub r_over_rf: f64,
    pub theta_deg: f64,
}

/// Receive strategy evaluated per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    PerfectCsi,
    PilotZf,
    PerfectLocalization,
    Localization { r_step_wavelengths: f64 },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::PerfectCsi => "zf-perfect-csi".into(),
            Strategy::PilotZf => "zf-pilot-ls".into(),
            Strategy::PerfectLocalization => "loc-perfect".into(),
            Strategy::Localization { r_step_wavelengths } => format!("loc-{r_step_wavelengths}lambda"),
        }
    }

    pub fn default_set() -> Vec<Strategy> {
        vec![
            Strategy::PerfectCsi,
            Strategy::PilotZf,
            Strategy::PerfectLocalization,
            Strategy::Localization { r_step_wavelengths: 10.0 },
            Strategy::Localization { r_step_wavelengths: 100.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fc_ghz: f64,
    pub n_antennas: usize,
    pub spacing_wavelengths: f64,
    pub users: Vec<UserSpec>,
    pub clusters: usize,
    /// Draw clusters once and reuse them in every trial.
    pub freeze_clusters: bool,
    /// Coherence block length at `reference_fc_ghz`; scales with wavelength.
    pub coherence_ref: f64,
    pub reference_fc_ghz: f64,
    /// B = bandwidth_fraction · fc.
    pub bandwidth_fraction: f64,
    pub noise_mode: NoiseMode,
    pub noise_figure_db: f64,
    pub tx_power_dbm: f64,
    pub snr_db: Vec<f64>,
    pub fc_sweep_ghz: Vec<f64>,
    pub pilot_fraction: f64,
    pub loc_fraction: f64,
    /// Snapshot count for the closed-form and interference analyses.
    pub analysis_snapshots: usize,
    pub strategies: Vec<Strategy>,
    pub theta_step_deg: f64,
    pub peak_separation: usize,
    pub m_search_width: usize,
    /// Single-user distances (fraction of R_F) swept by the analysis figures.
    pub sweep_r_over_rf: Vec<f64>,
    pub sweep_antennas: Vec<usize>,
    /// Half-width of the distance window around the truth, relative.
    pub window_fraction: f64,
    /// Distance step of 1-D analysis grids, in wavelengths.
    pub fine_step_wavelengths: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::fig4()
    }
}

impl ScenarioConfig {
    fn base() -> Self {
        Self {
            fc_ghz: 100.0,
            n_antennas: 128,
            spacing_wavelengths: 0.5,
            users: vec![
                UserSpec { r_over_rf: 0.125, theta_deg: 0.0 },
                UserSpec { r_over_rf: 0.5, theta_deg: 0.0 },
            ],
            clusters: 2,
            freeze_clusters: false,
            coherence_ref: 5000.0,
            reference_fc_ghz: 100.0,
            bandwidth_fraction: 0.001,
            noise_mode: NoiseMode::Normalized,
            noise_figure_db: 13.0,
            tx_power_dbm: 23.0,
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            fc_sweep_ghz: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
            pilot_fraction: 0.2,
            loc_fraction: 0.005,
            analysis_snapshots: 10,
            strategies: Strategy::default_set(),
            theta_step_deg: 0.5,
            peak_separation: crate::music::DEFAULT_PEAK_SEPARATION,
            m_search_width: crate::analysis::DEFAULT_M_SEARCH_WIDTH,
            sweep_r_over_rf: vec![],
            sweep_antennas: vec![],
            window_fraction: 0.2,
            fine_step_wavelengths: 0.1,
            trials: 100,
            seed: 2025,
        }
    }

    pub fn fig1() -> Self {
        Self {
            n_antennas: 2,
            spacing_wavelengths: 9.0,
            users: vec![UserSpec { r_over_rf: 0.1, theta_deg: 0.0 }],
            clusters: 0,
            snr_db: vec![20.0],
            sweep_r_over_rf: vec![0.1, 0.5],
            trials: 10_000,
            ..Self::base()
        }
    }

    pub fn fig2() -> Self {
        Self {
            n_antennas: 64,
            users: vec![UserSpec { r_over_rf: 0.1, theta_deg: 0.0 }],
            clusters: 0,
            snr_db: vec![20.0],
            sweep_r_over_rf: vec![1.0 / 10.0, 1.0 / 6.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 2.0],
            sweep_antennas: vec![64, 128],
            trials: 500,
            ..Self::base()
        }
    }

    pub fn fig3() -> Self {
        Self {
            n_antennas: 3,
            spacing_wavelengths: 9.0,
            users: vec![
                UserSpec { r_over_rf: 0.25, theta_deg: 0.0 },
                UserSpec { r_over_rf: 0.5, theta_deg: 0.0 },
            ],
            clusters: 0,
            snr_db: vec![40.0, 50.0, 60.0],
            fine_step_wavelengths: 0.05,
            trials: 20,
            ..Self::base()
        }
    }

    pub fn fig4() -> Self {
        Self::base()
    }

    pub fn fig5() -> Self {
        Self { noise_mode: NoiseMode::Physical, snr_db: vec![], ..Self::base() }
    }

    /// Full-size array for the sum-SE figures.
    pub fn paper_scale(mut self) -> Self {
        self.n_antennas = 512;
        self
    }

    /// Overrides fields from a JSON object; unknown keys are rejected.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(patch) = overrides else {
            return Err(Error::InvalidParameter("config must be a JSON object".into()));
        };
        let mut value = serde_json::to_value(self)?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        for (k, v) in patch {
            obj.insert(k.clone(), v.clone());
        }
        serde_json::from_value(value)
            .map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.fc_ghz) || !pos(self.reference_fc_ghz) {
            return bad("carrier frequencies must be positive");
        }
        if self.n_antennas == 0 || !pos(self.spacing_wavelengths) {
            return bad("array needs >= 1 antenna and positive spacing");
        }
        if self.users.is_empty() {
            return bad("at least one user is required");
        }
        for u in &self.users {
            if !(u.r_over_rf > 0.0 && u.r_over_rf <= 1.0) {
                return bad("user distances must lie in (0, R_F]");
            }
            if !(u.theta_deg.abs() <= 90.0) {
                return bad("user angles must lie in [-90, 90] degrees");
            }
        }
        if !pos(self.coherence_ref) || !pos(self.bandwidth_fraction) {
            return bad("coherence block and bandwidth fraction must be positive");
        }
        for f in [self.pilot_fraction, self.loc_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return bad("pilot fractions must lie in (0, 1)");
            }
        }
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if !pos(self.theta_step_deg) || !pos(self.fine_step_wavelengths) {
            return bad("grid steps must be positive");
        }
        if !(self.window_fraction > 0.0 && self.window_fraction < 1.0) {
            return bad("window fraction must lie in (0, 1)");
        }
        if self.analysis_snapshots == 0 || self.m_search_width == 0 {
            return bad("snapshot count and M search width must be >= 1");
        }
        for s in &self.strategies {
            if let Strategy::Localization { r_step_wavelengths } = s {
                if !pos(*r_step_wavelengths) {
                    return bad("localization distance steps must be positive");
                }
            }
        }
        if self.snr_db.iter().chain(&self.fc_sweep_ghz).any(|x| !x.is_finite())
            || self.fc_sweep_ghz.iter().any(|f| *f <= 0.0)
        {
            return bad("SNR and frequency lists must be finite (frequencies positive)");
        }
        if self.sweep_r_over_rf.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("sweep distances must lie in (0, R_F]");
        }
        if self.sweep_antennas.iter().any(|n| *n < 2) {
            return bad("swept arrays need >= 2 antennas");
        }
        Ok(())
    }

    pub fn carrier(&self) -> Result<CarrierConfig> {
        CarrierConfig::ghz(self.fc_ghz)
    }

    pub fn geometry(&self) -> Result<UlaGeometry> {
        UlaGeometry::with_spacing_in_wavelengths(self.n_antennas, self.spacing_wavelengths, &self.carrier()?)
    }

    pub fn with_fc(&self, fc_ghz: f64) -> Self {
        Self { fc_ghz, ..self.clone() }
    }

    pub fn with_antennas(&self, n: usize) -> Self {
        Self { n_antennas: n, ..self.clone() }
    }

    /// T(fc) = T₀ · f_ref / fc.
    pub fn coherence(&self) -> f64 {
        self.coherence_ref * self.reference_fc_ghz / self.fc_ghz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_fraction * self.fc_ghz * 1e9
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        self.validate()?;
        let carrier = self.carrier()?;
        let geom = self.geometry()?;
        let rf = fraunhofer_distance(&geom, &carrier);
        let users = self
            .users
            .iter()
            .map(|u| PolarLocation::from_degrees(u.r_over_rf * rf, u.theta_deg))
            .collect::<Result<Vec<_>>>()?;
        let k = users.len();
        let coherence = self.coherence();
        let (sigma_sq, sigma_sq_dbm, points) = match self.noise_mode {
            NoiseMode::Normalized => {
                let pts = self
                    .snr_db
                    .iter()
                    .map(|&snr| OperatingPoint { label: snr, powers: vec![10f64.powf(snr / 10.0); k] })
                    .collect();
                (1.0, None, pts)
            }
            NoiseMode::Physical => {
                let dbm = noise_power_dbm(self.noise_figure_db, self.bandwidth_hz());
                let pts = vec![OperatingPoint {
                    label: self.fc_ghz * 1e9,
                    powers: vec![dbm_to_watts(self.tx_power_dbm); k],
                }];
                (dbm_to_watts(dbm), Some(dbm), pts)
            }
        };
        let resolved = ResolvedScenario {
            fc_hz: carrier.frequency(),
            wavelength_m: carrier.wavelength(),
            n_antennas: self.n_antennas,
            spacing_m: geom.spacing(),
            fraunhofer_m: rf,
            coherence,
            tau_pil: pilot_length(self.pilot_fraction, coherence, k),
            tau_loc: pilot_length(self.loc_fraction, coherence, k),
            noise_mode: self.noise_mode,
            sigma_sq,
            sigma_sq_dbm,
            users,
            points,
        };
        if resolved.tau_pil as f64 > coherence || resolved.tau_loc as f64 > coherence {
            return Err(Error::InvalidParameter("pilot overhead exceeds the coherence block".into()));
        }
        Ok(resolved)
    }
}

/// One transmit-power setting: `label` is the SNR in dB (normalized mode) or
/// the carrier frequency in Hz (physical mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub label: f64,
    /// Per-user ρ_k, linear.
    pub powers: Vec<f64>,
}

/// Derived quantities echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScenario {
    pub fc_hz: f64,
    pub wavelength_m: f64,
    pub n_antennas: usize,
    pub spacing_m: f64,
    pub fraunhofer_m: f64,
    pub coherence: f64,
    pub tau_pil: usize,
    pub tau_loc: usize,
    pub noise_mode: NoiseMode,
    /// Linear; watts in physical mode.
    pub sigma_sq: f64,
    pub sigma_sq_dbm: Option<f64>,
    pub users: Vec<PolarLocation>,
    pub points: Vec<OperatingPoint>,
}
