//! Pilot books, received pilot matrices and the least-squares estimator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, ChannelRealization};
use crate::error::{Error, Result};

/// τ × K matrix whose columns are orthogonal unit-modulus pilots.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    matrix: DMatrix<Complex64>,
}

impl PilotBook {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn length(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn pilot(&self, k: usize) -> DVector<Complex64> {
        self.matrix.column(k).into_owned()
    }
}

/// First `users` columns of the τ-point DFT matrix, entry (t, k) = e^{-j2πtk/τ}.
pub fn dft_pilot_book(length: usize, users: usize) -> Result<PilotBook> {
    if users == 0 {
        return Err(Error::InvalidParameter("pilot book needs at least one user".into()));
    }
    if length < users {
        return Err(Error::InvalidParameter(format!(
            "pilot length {length} is shorter than the user count {users}"
        )));
    }
    let matrix = DMatrix::from_fn(length, users, |t, k| {
        // Reduce t·k mod τ first so the phase stays small and exact-ish.
        let idx = (t * k) % length;
        Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / length as f64)
    });
    Ok(PilotBook { matrix })
}

/// Pilot length for a fraction of the coherence block, rounded to nearest and
/// never below `min_len`.
pub fn pilot_length(fraction: f64, coherence: f64, min_len: usize) -> usize {
    ((fraction * coherence).round() as usize).max(min_len)
}

/// Additive white Gaussian noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Linear noise power σ² (W in physical mode, unitless when normalised).
    pub sigma_sq: f64,
}

impl NoiseModel {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise power must be >= 0, got {sigma_sq}")));
        }
        Ok(Self { sigma_sq })
    }

    /// σ²[dBm] = ξ - 174 + 10 log10(B).
    pub fn from_noise_figure(noise_figure_db: f64, bandwidth_hz: f64) -> Result<Self> {
        if !(bandwidth_hz > 0.0) {
            return Err(Error::InvalidParameter("bandwidth must be positive".into()));
        }
        Self::new(dbm_to_watts(noise_power_dbm(noise_figure_db, bandwidth_hz)))
    }

    pub fn sigma_sq_dbm(&self) -> f64 {
        watts_to_dbm(self.sigma_sq)
    }
}

pub fn noise_power_dbm(noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    noise_figure_db - 174.0 + 10.0 * bandwidth_hz.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// N × τ matrix of i.i.d. CN(0, σ²) entries drawn in row-major order.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(variance, rng);
        }
    }
    m
}

/// Received pilot block split into its noiseless part and the noise draw.
#[derive(Debug, Clone)]
pub struct ReceivedPilots {
    pub signal: DMatrix<Complex64>,
    pub noise: DMatrix<Complex64>,
}

impl ReceivedPilots {
    /// Y = Σ_k √ρ_k h_k p_kᵀ + N.
    pub fn total(&self) -> DMatrix<Complex64> {
        &self.signal + &self.noise
    }
}

/// Noiseless part Σ_k √ρ_k h_k p_kᵀ.
pub fn noiseless_pilot_matrix(
    channels: &DMatrix<Complex64>,
    pilots: &PilotBook,
    powers: &[f64],
) -> Result<DMatrix<Complex64>> {
    let k_users = channels.ncols();
    if pilots.n_users() != k_users || powers.len() != k_users {
        return Err(Error::DimensionMismatch(format!(
            "{} channels, {} pilots, {} powers",
            k_users,
            pilots.n_users(),
            powers.len()
        )));
    }
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidParameter(format!("transmit power must be >= 0, got {p}")));
    }
    let mut weighted = channels.clone();
    for (k, p) in powers.iter().enumerate() {
        weighted.column_mut(k).scale_mut(p.sqrt());
    }
    Ok(weighted * pilots.matrix().transpose())
}

pub fn received_pilot_matrix<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    pilots: &PilotBook,
    powers: &[f64],
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ReceivedPilots> {
    let signal = noiseless_pilot_matrix(&realization.channels, pilots, powers)?;
    let noise = complex_gaussian_matrix(signal.nrows(), signal.ncols(), noise.sigma_sq, rng);
    Ok(ReceivedPilots { signal, noise })
}

/// ĥ_k = Y p_k* / (√ρ_k τ).
pub fn ls_estimate(
    y: &DMatrix<Complex64>,
    pilot: &DVector<Complex64>,
    rho: f64,
    tau: usize,
) -> Result<DVector<Complex64>> {
    if y.ncols() != tau || pilot.len() != tau {
        return Err(Error::DimensionMismatch(format!(
            "Y has {} columns, pilot length {}, tau {}",
            y.ncols(),
            pilot.len(),
            tau
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::ZeroPower);
    }
    let scale = 1.0 / (rho.sqrt() * tau as f64);
    Ok(y * pilot.conjugate() * Complex64::new(scale, 0.0))
}

/// LS estimates for every user of a pilot book, as an N × K matrix.
pub fn ls_estimate_all(
    y: &DMatrix<Complex64>,
    pilots: &PilotBook,
    powers: &[f64],
) -> Result<DMatrix<Complex64>> {
    let mut out = DMatrix::zeros(y.nrows(), pilots.n_users());
    for (k, &rho) in powers.iter().enumerate() {
        out.set_column(k, &ls_estimate(y, &pilots.pilot(k), rho, pilots.length())?);
    }
    Ok(out)
}
