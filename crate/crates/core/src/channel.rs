//! Line-of-sight plus clustered non-line-of-sight channel generation with a
//! frequency-dependent reflection loss on every scattered path.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, CarrierConfig, PolarLocation, UlaGeometry};

/// Reflection loss (dB) of a rough mortar surface, linear in frequency.
pub fn reflection_coefficient_db(fc: f64) -> f64 {
    -0.0094 * (fc / 1e9) - 8.18
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Free-space amplitude factor λ/(4πr).
pub fn pathloss_amplitude(carrier: &CarrierConfig, r: f64) -> f64 {
    carrier.wavelength() / (4.0 * PI * r)
}

/// A scatterer cluster shared by all users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub location: PolarLocation,
    pub reflection_db: f64,
    /// γ² = (λ/(4π r))² α, linear.
    pub gamma_sq: f64,
}

impl Cluster {
    pub fn new(location: PolarLocation, carrier: &CarrierConfig, reflection_db: f64) -> Result<Self> {
        let alpha = db_to_linear(reflection_db);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "reflection coefficient must lie in (0, 1], got {alpha}"
            )));
        }
        let amp = pathloss_amplitude(carrier, location.r);
        Ok(Self { location, reflection_db, gamma_sq: amp * amp * alpha })
    }

    /// Cluster using the measured reflection fit at the carrier frequency.
    pub fn with_measured_reflection(location: PolarLocation, carrier: &CarrierConfig) -> Result<Self> {
        Self::new(location, carrier, reflection_coefficient_db(carrier.frequency()))
    }

    pub fn alpha(&self) -> f64 {
        db_to_linear(self.reflection_db)
    }
}

/// Draws `count` clusters: distance uniform on [10λ, max_k r_k], angle
/// uniform on [-π/2, π/2]. Each cluster consumes two uniforms (r, then θ).
pub fn draw_clusters<R: Rng + ?Sized>(
    count: usize,
    users: &[PolarLocation],
    carrier: &CarrierConfig,
    rng: &mut R,
) -> Result<Vec<Cluster>> {
    if users.is_empty() {
        return Err(Error::EmptyUsers);
    }
    let r_min = 10.0 * carrier.wavelength();
    let r_max = users.iter().map(|u| u.r).fold(f64::NEG_INFINITY, f64::max);
    if r_max < r_min {
        return Err(Error::InvalidParameter(format!(
            "farthest user ({r_max} m) is closer than 10 wavelengths"
        )));
    }
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let r = r_min + (r_max - r_min) * u;
            let theta = -FRAC_PI_2 + PI * v;
            Cluster::with_measured_reflection(PolarLocation::new(r, theta)?, carrier)
        })
        .collect()
}

/// One realisation of all user channels.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub users: Vec<PolarLocation>,
    pub clusters: Vec<Cluster>,
    /// N × K, column k is h_k.
    pub channels: DMatrix<Complex64>,
    /// K × L small-scale fading draws g_{k,l}.
    pub nlos_coeffs: DMatrix<Complex64>,
    /// Common factor applied to every channel after generation (1 until normalised).
    pub scale: f64,
}

impl ChannelRealization {
    pub fn n_users(&self) -> usize {
        self.channels.ncols()
    }

    pub fn n_antennas(&self) -> usize {
        self.channels.nrows()
    }

    pub fn channel(&self, k: usize) -> DVector<Complex64> {
        self.channels.column(k).into_owned()
    }

    /// Rebuilds the channel matrix from the stored geometry and fading draws.
    pub fn reconstruct(&self, carrier: &CarrierConfig, geom: &UlaGeometry) -> DMatrix<Complex64> {
        let mut h = DMatrix::zeros(geom.n_antennas(), self.users.len());
        let scattered: Vec<DVector<Complex64>> = self
            .clusters
            .iter()
            .map(|c| steering_vector(carrier, &c.location, geom).into_vector())
            .collect();
        for (k, user) in self.users.iter().enumerate() {
            let mut col = los_component(carrier, user, geom);
            for (l, b) in scattered.iter().enumerate() {
                col.axpy(self.nlos_coeffs[(k, l)], b, Complex64::new(1.0, 0.0));
            }
            h.set_column(k, &(col * Complex64::new(self.scale, 0.0)));
        }
        h
    }

    /// Scales every channel by 1/‖h_ref‖.
    pub fn normalize(&self, reference_user: usize) -> Result<Self> {
        if reference_user >= self.n_users() {
            return Err(Error::IndexOutOfRange { index: reference_user, len: self.n_users() });
        }
        let norm = self.channels.column(reference_user).norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroNormChannel(reference_user));
        }
        let mut out = self.clone();
        out.channels.unscale_mut(norm);
        out.scale /= norm;
        Ok(out)
    }

    /// Ratio of total scattered power Σ_l γ_l² to the LoS power of user `k`.
    pub fn nlos_to_los_ratio(&self, carrier: &CarrierConfig, k: usize) -> f64 {
        nlos_to_los_ratio(&self.clusters, carrier, self.users[k].r)
    }
}

/// Σ_l γ_l² / (λ/(4π r_user))².
pub fn nlos_to_los_ratio(clusters: &[Cluster], carrier: &CarrierConfig, user_r: f64) -> f64 {
    let los = pathloss_amplitude(carrier, user_r).powi(2);
    clusters.iter().map(|c| c.gamma_sq).sum::<f64>() / los
}

/// (λ/(4π r)) e^{-j2πr/λ} b(r, θ).
pub fn los_component(
    carrier: &CarrierConfig,
    user: &PolarLocation,
    geom: &UlaGeometry,
) -> DVector<Complex64> {
    let gain = Complex64::from_polar(
        pathloss_amplitude(carrier, user.r),
        -carrier.wavenumber() * user.r,
    );
    steering_vector(carrier, user, geom).into_vector() * gain
}

/// Draws a circularly-symmetric complex Gaussian with the given variance
/// (real part first, then imaginary part).
pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Generates all user channels. Fading draws are taken user-major
/// (g_{1,1}, g_{1,2}, …, g_{K,L}).
pub fn realize_channel<R: Rng + ?Sized>(
    users: &[PolarLocation],
    clusters: &[Cluster],
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if users.is_empty() {
        return Err(Error::EmptyUsers);
    }
    let k_users = users.len();
    let mut nlos = DMatrix::zeros(k_users, clusters.len());
    for k in 0..k_users {
        for (l, c) in clusters.iter().enumerate() {
            nlos[(k, l)] = complex_gaussian(c.gamma_sq, rng);
        }
    }
    let mut out = ChannelRealization {
        users: users.to_vec(),
        clusters: clusters.to_vec(),
        channels: DMatrix::zeros(geom.n_antennas(), k_users),
        nlos_coeffs: nlos,
        scale: 1.0,
    };
    out.channels = out.reconstruct(carrier, geom);
    Ok(out)
}
