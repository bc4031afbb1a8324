//! Zero-forcing receive combiners, per-user SINR and sum spectral efficiency.
//!
//! The same ZF structure W = B(BᴴB)⁻¹ serves every strategy; only the basis
//! differs: true channels, LS channel estimates, or steering vectors at the
//! (estimated or true) user locations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, CarrierConfig, PolarLocation, UlaGeometry};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    PerfectCsi,
    PilotLs,
    Localization,
    PerfectLocalization,
}

#[derive(Debug, Clone)]
pub struct CombinerMatrix {
    /// N × K, column k is w_k.
    pub columns: DMatrix<Complex64>,
    pub basis_kind: BasisKind,
}

impl CombinerMatrix {
    pub fn column(&self, k: usize) -> DVector<Complex64> {
        self.columns.column(k).into_owned()
    }

    pub fn n_users(&self) -> usize {
        self.columns.ncols()
    }
}

/// Condition number of BᴴB from its eigenvalues (∞ if not positive definite).
pub fn gram_condition(basis: &DMatrix<Complex64>) -> f64 {
    let gram = basis.adjoint() * basis;
    let eig = gram.symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        f64::INFINITY
    } else {
        max / min
    }
}

/// W = B(BᴴB)⁻¹ via a Cholesky solve of the Gram matrix.
pub fn zf_combiner(basis: &DMatrix<Complex64>, kind: BasisKind) -> Result<CombinerMatrix> {
    if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "basis is {}x{}; need 1 <= K <= N",
            basis.nrows(),
            basis.ncols()
        )));
    }
    if basis.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("combiner basis"));
    }
    let condition = gram_condition(basis);
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularBasis { condition });
    }
    let gram = basis.adjoint() * basis;
    let chol = gram.cholesky().ok_or(Error::SingularBasis { condition })?;
    // (BᴴB)⁻¹Bᴴ = Wᴴ since the Gram matrix is Hermitian.
    let w_adj = chol.solve(&basis.adjoint());
    Ok(CombinerMatrix { columns: w_adj.adjoint(), basis_kind: kind })
}

/// Stacks steering vectors at the given locations as columns.
pub fn steering_basis(
    locations: &[PolarLocation],
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
) -> DMatrix<Complex64> {
    let cols: Vec<DVector<Complex64>> = locations
        .iter()
        .map(|loc| steering_vector(carrier, loc, geom).into_vector())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Beam focusing towards estimated locations: ZF over their steering vectors.
pub fn localization_combiner(
    estimates: &[PolarLocation],
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
) -> Result<CombinerMatrix> {
    zf_combiner(&steering_basis(estimates, carrier, geom), BasisKind::Localization)
}

/// SINR_k = ρ_k|w_kᴴh_k|² / (Σ_{i≠k} ρ_i|w_kᴴh_i|² + σ²‖w_k‖²).
pub fn sinr(
    k: usize,
    combiner: &CombinerMatrix,
    channels: &DMatrix<Complex64>,
    powers: &[f64],
    sigma_sq: f64,
) -> Result<f64> {
    let users = channels.ncols();
    if combiner.columns.nrows() != channels.nrows()
        || combiner.n_users() != users
        || powers.len() != users
    {
        return Err(Error::DimensionMismatch(format!(
            "combiner {}x{}, channels {}x{}, {} powers",
            combiner.columns.nrows(),
            combiner.n_users(),
            channels.nrows(),
            users,
            powers.len()
        )));
    }
    if k >= users {
        return Err(Error::IndexOutOfRange { index: k, len: users });
    }
    let w = combiner.columns.column(k);
    let w_norm_sq = w.norm_squared();
    if w_norm_sq == 0.0 {
        return Err(Error::ZeroCombiner(k));
    }
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (i, &rho) in powers.iter().enumerate() {
        let gain = rho * w.dotc(&channels.column(i)).norm_sqr();
        if i == k {
            signal = gain;
        } else {
            interference += gain;
        }
    }
    Ok(signal / (interference + sigma_sq * w_norm_sq))
}

pub fn sinrs(
    combiner: &CombinerMatrix,
    channels: &DMatrix<Complex64>,
    powers: &[f64],
    sigma_sq: f64,
) -> Result<Vec<f64>> {
    (0..channels.ncols()).map(|k| sinr(k, combiner, channels, powers, sigma_sq)).collect()
}

/// Sum-SE of one realisation with its training overhead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeReport {
    pub per_user_sinr: Vec<f64>,
    /// 1 - overhead/T.
    pub prelog: f64,
    /// bit/s/Hz.
    pub sum_se: f64,
    pub overhead_len: usize,
}

pub fn sum_se(sinrs: &[f64], overhead_len: usize, coherence: f64) -> Result<SeReport> {
    if !(coherence > 0.0) {
        return Err(Error::InvalidParameter("coherence block must be positive".into()));
    }
    if overhead_len as f64 > coherence {
        return Err(Error::InvalidParameter(format!(
            "overhead {overhead_len} exceeds coherence block {coherence}"
        )));
    }
    let prelog = 1.0 - overhead_len as f64 / coherence;
    let rate: f64 = sinrs.iter().map(|s| (1.0 + s).log2()).sum();
    Ok(SeReport {
        per_user_sinr: sinrs.to_vec(),
        prelog,
        sum_se: prelog * rate,
        overhead_len,
    })
}
