//! Carrier and uniform-linear-array geometry, per-element distances and
//! near-field (spherical-wavefront) steering vectors.
//!
//! Angles are radians throughout the library; configuration files and the
//! CLI take degrees and convert on ingestion.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Slack accepted on the `[-pi/2, pi/2]` angle bounds after degree conversion.
const ANGLE_SLACK: f64 = 1e-12;

/// Carrier frequency. The wavelength is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierConfig {
    fc: f64,
}

impl CarrierConfig {
    pub fn new(fc: f64) -> Result<Self> {
        if !(fc.is_finite() && fc > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "carrier frequency must be positive, got {fc}"
            )));
        }
        Ok(Self { fc })
    }

    /// Carrier given in GHz.
    pub fn ghz(fc_ghz: f64) -> Result<Self> {
        Self::new(fc_ghz * 1e9)
    }

    pub fn frequency(&self) -> f64 {
        self.fc
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }
}

/// Uniform linear array centred on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    n_antennas: usize,
    spacing: f64,
}

impl UlaGeometry {
    pub fn new(n_antennas: usize, spacing: f64) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidParameter("array needs at least one antenna".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "antenna spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { n_antennas, spacing })
    }

    /// Array with spacing given as a multiple of the carrier wavelength.
    pub fn with_spacing_in_wavelengths(
        n_antennas: usize,
        spacing_wavelengths: f64,
        carrier: &CarrierConfig,
    ) -> Result<Self> {
        Self::new(n_antennas, spacing_wavelengths * carrier.wavelength())
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// D = (N - 1) d.
    pub fn aperture(&self) -> f64 {
        (self.n_antennas - 1) as f64 * self.spacing
    }

    /// Normalised element offset δ_n = (2n - N + 1)/2.
    pub fn offset(&self, n: usize) -> f64 {
        (2.0 * n as f64 - self.n_antennas as f64 + 1.0) / 2.0
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.n_antennas).map(|n| self.offset(n)).collect()
    }
}

/// Source position relative to the array centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarLocation {
    /// Distance from the array centre (m).
    pub r: f64,
    /// Angle from broadside (rad).
    pub theta: f64,
}

impl PolarLocation {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("distance must be positive, got {r}")));
        }
        if !(theta.is_finite() && theta.abs() <= FRAC_PI_2 + ANGLE_SLACK) {
            return Err(Error::InvalidParameter(format!(
                "angle must lie in [-pi/2, pi/2], got {theta}"
            )));
        }
        Ok(Self { r, theta: theta.clamp(-FRAC_PI_2, FRAC_PI_2) })
    }

    pub fn from_degrees(r: f64, theta_deg: f64) -> Result<Self> {
        Self::new(r, theta_deg.to_radians())
    }

    pub fn theta_degrees(&self) -> f64 {
        self.theta.to_degrees()
    }
}

/// Near-field array response. Every entry has unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(DVector<Complex64>);

impl SteeringVector {
    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for SteeringVector {
    type Output = Complex64;

    fn index(&self, n: usize) -> &Complex64 {
        &self.0[n]
    }
}

/// R_F = 2 D² / λ.
pub fn fraunhofer_distance(geom: &UlaGeometry, carrier: &CarrierConfig) -> f64 {
    let aperture = geom.aperture();
    2.0 * aperture * aperture / carrier.wavelength()
}

/// Distance from antenna `n` to the source.
pub fn element_distance(loc: &PolarLocation, geom: &UlaGeometry, n: usize) -> Result<f64> {
    if n >= geom.n_antennas() {
        return Err(Error::IndexOutOfRange { index: n, len: geom.n_antennas() });
    }
    let x = geom.offset(n) * geom.spacing();
    Ok(offset_distance(loc.r, loc.theta.sin(), x))
}

#[inline]
fn offset_distance(r: f64, sin_theta: f64, x: f64) -> f64 {
    (r * r + x * x - 2.0 * r * x * sin_theta).sqrt()
}

/// b(f_c, r, θ) with entries exp(-j 2π/λ (r̄_n - r)).
pub fn steering_vector(
    carrier: &CarrierConfig,
    loc: &PolarLocation,
    geom: &UlaGeometry,
) -> SteeringVector {
    let kernel = SteeringKernel::new(carrier, geom);
    let mut out = vec![Complex64::new(0.0, 0.0); geom.n_antennas()];
    kernel.fill(loc.r, loc.theta.sin(), &mut out);
    SteeringVector(DVector::from_vec(out))
}

/// Precomputed element positions for evaluating many steering vectors on a grid.
#[derive(Debug, Clone)]
pub struct SteeringKernel {
    wavenumber: f64,
    positions: Vec<f64>,
    positions_sq: Vec<f64>,
}

impl SteeringKernel {
    pub fn new(carrier: &CarrierConfig, geom: &UlaGeometry) -> Self {
        let positions: Vec<f64> =
            geom.offsets().into_iter().map(|delta| delta * geom.spacing()).collect();
        let positions_sq = positions.iter().map(|x| x * x).collect();
        Self { wavenumber: carrier.wavenumber(), positions, positions_sq }
    }

    pub fn n_antennas(&self) -> usize {
        self.positions.len()
    }

    /// Writes b(r, θ) into `out` given sin θ.
    #[inline]
    pub fn fill(&self, r: f64, sin_theta: f64, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.positions.len());
        let r_sq = r * r;
        let cross = 2.0 * r * sin_theta;
        for ((slot, &x), &x_sq) in out.iter_mut().zip(&self.positions).zip(&self.positions_sq) {
            let dist = (r_sq + x_sq - cross * x).sqrt();
            let (s, c) = (-self.wavenumber * (dist - r)).sin_cos();
            *slot = Complex64::new(c, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn carrier_100ghz() -> CarrierConfig {
        CarrierConfig::ghz(100.0).unwrap()
    }

    #[test]
    fn wavelength_times_frequency_is_c() {
        let c = carrier_100ghz();
        assert!((c.wavelength() * c.frequency() - SPEED_OF_LIGHT).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CarrierConfig::new(0.0).is_err());
        assert!(UlaGeometry::new(0, 1.0).is_err());
        assert!(UlaGeometry::new(4, -1.0).is_err());
        assert!(PolarLocation::new(0.0, 0.0).is_err());
        assert!(PolarLocation::new(1.0, 2.0).is_err());
        assert!(PolarLocation::from_degrees(1.0, 90.0).is_ok());
        assert!(PolarLocation::from_degrees(1.0, -90.0).is_ok());
    }

    #[test]
    fn offsets_are_symmetric() {
        for n in 1..9 {
            let g = UlaGeometry::new(n, 0.1).unwrap();
            let o = g.offsets();
            for i in 0..n {
                assert_eq!(o[i], -o[n - 1 - i]);
            }
            assert!((g.aperture() - (n - 1) as f64 * 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn fraunhofer_512_half_wavelength() {
        let c = carrier_100ghz();
        let g = UlaGeometry::with_spacing_in_wavelengths(512, 0.5, &c).unwrap();
        let rf = fraunhofer_distance(&g, &c);
        // 130560.5 λ.
        assert!((rf - 391.41).abs() < 0.01, "R_F = {rf}");
    }

    #[test]
    fn fraunhofer_single_antenna_is_zero() {
        let c = carrier_100ghz();
        let g = UlaGeometry::new(1, c.wavelength()).unwrap();
        assert_eq!(fraunhofer_distance(&g, &c), 0.0);
    }

    #[test]
    fn fraunhofer_nine_wavelength_spacing() {
        let c = carrier_100ghz();
        let g = UlaGeometry::with_spacing_in_wavelengths(2, 9.0, &c).unwrap();
        assert!((fraunhofer_distance(&g, &c) / c.wavelength() - 162.0).abs() < 1e-9);
        let g = UlaGeometry::with_spacing_in_wavelengths(3, 9.0, &c).unwrap();
        let rf = fraunhofer_distance(&g, &c);
        assert!((rf / 4.0 - 0.486).abs() < 5e-4, "R_F/4 = {}", rf / 4.0);
    }

    #[test]
    fn element_distance_cases() {
        let c = carrier_100ghz();
        let lam = c.wavelength();
        let single = UlaGeometry::new(1, lam).unwrap();
        let loc = PolarLocation::new(3.7, 0.4).unwrap();
        assert_eq!(element_distance(&loc, &single, 0).unwrap(), 3.7);
        assert!(element_distance(&loc, &single, 1).is_err());

        let two = UlaGeometry::with_spacing_in_wavelengths(2, 0.5, &c).unwrap();
        let loc = PolarLocation::new(10.0 * lam, 0.0).unwrap();
        let expected = lam * (100.0_f64 + 1.0 / 16.0).sqrt();
        for n in 0..2 {
            let got = element_distance(&loc, &two, n).unwrap();
            assert!(((got - expected) / expected).abs() < 1e-14);
        }
    }

    #[test]
    fn single_antenna_steering_is_one() {
        let c = carrier_100ghz();
        let g = UlaGeometry::new(1, c.wavelength()).unwrap();
        let b = steering_vector(&c, &PolarLocation::new(2.0, 0.3).unwrap(), &g);
        assert!((b[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn broadside_steering_is_palindromic() {
        let c = carrier_100ghz();
        let g = UlaGeometry::with_spacing_in_wavelengths(9, 0.5, &c).unwrap();
        let b = steering_vector(&c, &PolarLocation::new(0.4, 0.0).unwrap(), &g);
        for n in 0..9 {
            assert!((b[n] - b[8 - n]).norm() < 1e-12);
        }
    }

    #[test]
    fn far_field_limit() {
        let c = carrier_100ghz();
        let lam = c.wavelength();
        let g = UlaGeometry::with_spacing_in_wavelengths(16, 0.5, &c).unwrap();
        let rf = fraunhofer_distance(&g, &c);
        let theta = 0.35_f64;
        let mut previous = f64::INFINITY;
        for scale in [1e2, 1e4, 1e6] {
            let loc = PolarLocation::new(scale * rf, theta).unwrap();
            let b = steering_vector(&c, &loc, &g);
            let mut worst = 0.0_f64;
            for n in 0..16 {
                let far = 2.0 * PI * g.offset(n) * g.spacing() * theta.sin() / lam;
                let err = (b[n] * Complex64::from_polar(1.0, -far)).arg().abs();
                worst = worst.max(err);
            }
            assert!(worst < 1e-2, "scale {scale}: phase error {worst}");
            assert!(worst < previous);
            previous = worst;
        }
    }
}
