//! 2D-MUSIC: sample covariance, Hermitian eigendecomposition, spectrum
//! evaluation over an (r, θ) grid, peak picking and user association.
//!
//! The spectrum is evaluated through the signal subspace,
//! bᴴU_nU_nᴴb = N - ‖U_sᴴb‖², which costs O(NK) per grid point. The direct
//! noise-subspace form is kept as [`music_spectrum_naive`] for cross-checks.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, CarrierConfig, PolarLocation, SteeringKernel, UlaGeometry};

/// Relative floor applied to the spectrum denominator before inversion.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// Default minimum peak separation in grid cells.
pub const DEFAULT_PEAK_SEPARATION: usize = 3;

/// R = (1/τ) Y Yᴴ.
pub fn sample_covariance(y: &DMatrix<Complex64>, tau: usize) -> Result<DMatrix<Complex64>> {
    if tau == 0 {
        return Err(Error::InvalidParameter("covariance needs at least one snapshot".into()));
    }
    if y.ncols() != tau {
        return Err(Error::DimensionMismatch(format!(
            "Y has {} columns but tau = {tau}",
            y.ncols()
        )));
    }
    let mut r = y * y.adjoint();
    r.unscale_mut(tau as f64);
    Ok(r)
}

/// Eigen-decomposition of a sample covariance split into signal and noise parts.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<Complex64>,
    pub n_signal: usize,
}

impl SubspacePair {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// First K eigenvectors.
    pub fn signal_basis(&self) -> DMatrix<Complex64> {
        self.eigenvectors.columns(0, self.n_signal).into_owned()
    }

    /// Last N - K eigenvectors (U_n).
    pub fn noise_basis(&self) -> DMatrix<Complex64> {
        self.eigenvectors.columns(self.n_signal, self.dim() - self.n_signal).into_owned()
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. The input is symmetrised as (R + Rᴴ)/2 first.
pub fn hermitian_eigendecomposition(r: &DMatrix<Complex64>, n_signal: usize) -> Result<SubspacePair> {
    let n = r.nrows();
    if n == 0 || r.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}", r.nrows(), r.ncols())));
    }
    if n_signal > n {
        return Err(Error::InvalidParameter(format!("{n_signal} signal dimensions exceed N = {n}")));
    }
    if r.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("covariance matrix"));
    }
    let sym = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalues"));
    }
    Ok(SubspacePair { eigenvalues, eigenvectors, n_signal })
}

/// Search grid over distance and angle, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicGrid {
    pub r_values: Vec<f64>,
    pub theta_values: Vec<f64>,
    pub r_step: f64,
    pub theta_step: f64,
}

impl MusicGrid {
    /// Inclusive uniform grid. Angles in radians.
    pub fn uniform(
        r_min: f64,
        r_max: f64,
        r_step: f64,
        theta_min: f64,
        theta_max: f64,
        theta_step: f64,
    ) -> Result<Self> {
        let r_values = linspace_step(r_min, r_max, r_step)?;
        let theta_values = linspace_step(theta_min, theta_max, theta_step)?;
        Self::from_values(r_values, theta_values, r_step, theta_step)
    }

    /// Default search region: r ∈ [10λ, R_F], θ ∈ [-90°, 90°].
    pub fn default_region(
        carrier: &CarrierConfig,
        geom: &UlaGeometry,
        r_step: f64,
        theta_step_deg: f64,
    ) -> Result<Self> {
        let rf = crate::geometry::fraunhofer_distance(geom, carrier);
        Self::with_degree_angles(10.0 * carrier.wavelength(), rf, r_step, -90.0, 90.0, theta_step_deg)
    }

    /// Uniform grid whose angle axis is laid out in degrees before conversion,
    /// so that e.g. 0° lands exactly on 0 rad.
    pub fn with_degree_angles(
        r_min: f64,
        r_max: f64,
        r_step: f64,
        theta_min_deg: f64,
        theta_max_deg: f64,
        theta_step_deg: f64,
    ) -> Result<Self> {
        let r_values = linspace_step(r_min, r_max, r_step)?;
        let theta_values = linspace_step(theta_min_deg, theta_max_deg, theta_step_deg)?
            .into_iter()
            .map(f64::to_radians)
            .collect();
        Self::from_values(r_values, theta_values, r_step, theta_step_deg.to_radians())
    }

    /// Distance-only grid at a known angle.
    pub fn distance_only(r_min: f64, r_max: f64, r_step: f64, theta: f64) -> Result<Self> {
        Self::from_values(linspace_step(r_min, r_max, r_step)?, vec![theta], r_step, 1.0)
    }

    pub fn from_values(
        r_values: Vec<f64>,
        theta_values: Vec<f64>,
        r_step: f64,
        theta_step: f64,
    ) -> Result<Self> {
        if r_values.is_empty() || theta_values.is_empty() {
            return Err(Error::InvalidParameter("grid axes must be nonempty".into()));
        }
        if !(r_step > 0.0 && theta_step > 0.0) {
            return Err(Error::InvalidParameter("grid steps must be positive".into()));
        }
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !ascending(&r_values) || !ascending(&theta_values) {
            return Err(Error::InvalidParameter("grid axes must be strictly ascending".into()));
        }
        if r_values[0] <= 0.0 {
            return Err(Error::InvalidParameter("grid distances must be positive".into()));
        }
        Ok(Self { r_values, theta_values, r_step, theta_step })
    }

    pub fn n_r(&self) -> usize {
        self.r_values.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta_values.len()
    }

    pub fn len(&self) -> usize {
        self.n_r() * self.n_theta()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn location(&self, i: usize, j: usize) -> PolarLocation {
        PolarLocation { r: self.r_values[i], theta: self.theta_values[j] }
    }

    /// Grid indices nearest to a location.
    pub fn nearest(&self, loc: &PolarLocation) -> (usize, usize) {
        (nearest_index(&self.r_values, loc.r), nearest_index(&self.theta_values, loc.theta))
    }
}

fn nearest_index(values: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - x).abs() < (values[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// `min, min + step, …` up to and including `max` (with a small tolerance).
pub fn linspace_step(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && min.is_finite() && max.is_finite() && max >= min) {
        return Err(Error::InvalidParameter(format!(
            "bad axis: min {min}, max {max}, step {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

/// Spectrum over a grid, stored as the raw denominators bᴴU_nU_nᴴb
/// (row-major, distance index outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n_r: usize,
    pub n_theta: usize,
    pub denominators: Vec<f64>,
    /// Denominators are clamped at this value before inversion.
    pub floor: f64,
}

impl Spectrum {
    pub fn denominator(&self, i: usize, j: usize) -> f64 {
        self.denominators[i * self.n_theta + j]
    }

    /// S(r_i, θ_j).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        1.0 / self.denominator(i, j).max(self.floor)
    }

    pub fn values(&self) -> Vec<f64> {
        self.denominators.iter().map(|d| 1.0 / d.max(self.floor)).collect()
    }
}

/// Signal basis with columns stored contiguously for the hot loop.
struct PackedBasis {
    cols: Vec<Complex64>,
    k: usize,
}

impl PackedBasis {
    fn new(sub: &SubspacePair) -> Self {
        let n = sub.dim();
        let mut cols = Vec::with_capacity(n * sub.n_signal);
        for k in 0..sub.n_signal {
            cols.extend(sub.eigenvectors.column(k).iter().copied());
        }
        Self { cols, k: sub.n_signal }
    }

    /// N - ‖U_sᴴ b‖².
    #[inline]
    fn denominator(&self, b: &[Complex64]) -> f64 {
        let n = b.len();
        let mut captured = 0.0;
        for col in self.cols.chunks_exact(n).take(self.k) {
            let (mut re, mut im) = (0.0, 0.0);
            for (u, x) in col.iter().zip(b) {
                // conj(u) * x
                re += u.re * x.re + u.im * x.im;
                im += u.re * x.im - u.im * x.re;
            }
            captured += re * re + im * im;
        }
        n as f64 - captured
    }
}

fn check_subspace(sub: &SubspacePair, geom: &UlaGeometry) -> Result<()> {
    if sub.dim() != geom.n_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "subspace dimension {} but {} antennas",
            sub.dim(),
            geom.n_antennas()
        )));
    }
    if sub.n_signal >= sub.dim() {
        return Err(Error::InvalidParameter("MUSIC needs K < N".into()));
    }
    Ok(())
}

/// S(r, θ) = 1/(bᴴU_nU_nᴴb) on every grid point via the signal subspace.
pub fn music_spectrum(
    subspaces: &SubspacePair,
    grid: &MusicGrid,
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
) -> Result<Spectrum> {
    Ok(music_spectrum_batch(std::slice::from_ref(subspaces), grid, carrier, geom)?
        .pop()
        .expect("one spectrum per subspace"))
}

/// Evaluates several spectra on the same grid, sharing each steering vector
/// across all subspaces. Output order follows `subspaces`; rows are computed
/// in parallel and each cell independently, so results do not depend on the
/// thread count.
pub fn music_spectrum_batch(
    subspaces: &[SubspacePair],
    grid: &MusicGrid,
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
) -> Result<Vec<Spectrum>> {
    for sub in subspaces {
        check_subspace(sub, geom)?;
    }
    let n = geom.n_antennas();
    let kernel = SteeringKernel::new(carrier, geom);
    let packed: Vec<PackedBasis> = subspaces.iter().map(PackedBasis::new).collect();
    let sin_theta: Vec<f64> = grid.theta_values.iter().map(|t| t.sin()).collect();
    let n_theta = grid.n_theta();
    let n_spec = subspaces.len();

    // rows[i] holds n_spec × n_theta denominators for distance r_i.
    let rows: Vec<Vec<f64>> = grid
        .r_values
        .par_iter()
        .map(|&r| {
            let mut b = vec![Complex64::new(0.0, 0.0); n];
            let mut row = vec![0.0; n_spec * n_theta];
            for (j, &s) in sin_theta.iter().enumerate() {
                kernel.fill(r, s, &mut b);
                for (p, basis) in packed.iter().enumerate() {
                    row[p * n_theta + j] = basis.denominator(&b);
                }
            }
            row
        })
        .collect();

    let floor = DENOMINATOR_FLOOR * n as f64;
    Ok((0..n_spec)
        .map(|p| {
            let mut denominators = Vec::with_capacity(grid.len());
            for row in &rows {
                denominators.extend_from_slice(&row[p * n_theta..(p + 1) * n_theta]);
            }
            Spectrum { n_r: grid.n_r(), n_theta, denominators, floor }
        })
        .collect())
}

/// Steering vectors of every grid point, one per row, for grids that are
/// searched many times with different subspaces.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    pub grid: MusicGrid,
    rows: DMatrix<Complex64>,
}

impl SteeringTable {
    pub fn new(grid: &MusicGrid, carrier: &CarrierConfig, geom: &UlaGeometry) -> Self {
        let n = geom.n_antennas();
        let kernel = SteeringKernel::new(carrier, geom);
        let mut rows = DMatrix::zeros(grid.len(), n);
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..grid.n_r() {
            for j in 0..grid.n_theta() {
                kernel.fill(grid.r_values[i], grid.theta_values[j].sin(), &mut b);
                let p = i * grid.n_theta() + j;
                for (col, z) in b.iter().enumerate() {
                    rows[(p, col)] = *z;
                }
            }
        }
        Self { grid: grid.clone(), rows }
    }

    pub fn n_antennas(&self) -> usize {
        self.rows.ncols()
    }
}

/// Same spectrum as [`music_spectrum`], evaluated as one matrix product
/// against a precomputed steering table.
pub fn music_spectrum_tabulated(table: &SteeringTable, subspaces: &SubspacePair) -> Result<Spectrum> {
    let n = table.n_antennas();
    if subspaces.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "subspace dimension {} but {} antennas",
            subspaces.dim(),
            n
        )));
    }
    if subspaces.n_signal >= n {
        return Err(Error::InvalidParameter("MUSIC needs K < N".into()));
    }
    let captured = &table.rows * subspaces.signal_basis().conjugate();
    let denominators = captured
        .row_iter()
        .map(|row| n as f64 - row.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    Ok(Spectrum {
        n_r: table.grid.n_r(),
        n_theta: table.grid.n_theta(),
        denominators,
        floor: DENOMINATOR_FLOOR * n as f64,
    })
}

/// ‖U_nᴴ b‖² computed directly from the noise basis.
pub fn noise_projection(noise_basis: &DMatrix<Complex64>, b: &DVector<Complex64>) -> f64 {
    (noise_basis.adjoint() * b).norm_squared()
}

/// Reference spectrum evaluated through U_n U_nᴴ, O(N(N-K)) per point.
pub fn music_spectrum_naive(
    subspaces: &SubspacePair,
    grid: &MusicGrid,
    carrier: &CarrierConfig,
    geom: &UlaGeometry,
) -> Result<Spectrum> {
    check_subspace(subspaces, geom)?;
    let un = subspaces.noise_basis();
    let mut denominators = Vec::with_capacity(grid.len());
    for i in 0..grid.n_r() {
        for j in 0..grid.n_theta() {
            let b = steering_vector(carrier, &grid.location(i, j), geom).into_vector();
            denominators.push(noise_projection(&un, &b));
        }
    }
    Ok(Spectrum {
        n_r: grid.n_r(),
        n_theta: grid.n_theta(),
        denominators,
        floor: DENOMINATOR_FLOOR * geom.n_antennas() as f64,
    })
}

/// Picks `k` peaks: strict 8-neighbourhood local maxima in descending
/// spectrum order, skipping any candidate closer than `min_separation`
/// cells (Chebyshev distance) to an accepted peak. Missing peaks are filled
/// from the largest remaining grid values. Returns (r index, θ index) pairs.
pub fn find_peaks(spectrum: &Spectrum, k: usize, min_separation: usize) -> Result<Vec<(usize, usize)>> {
    let (nr, nt) = (spectrum.n_r, spectrum.n_theta);
    if nr * nt <= k {
        return Err(Error::InvalidParameter(format!(
            "grid of {} points cannot hold {k} peaks",
            nr * nt
        )));
    }
    let values = spectrum.values();
    let first = values[0];
    if values.iter().all(|v| *v == first) {
        return Err(Error::DegenerateSpectrum);
    }
    let at = |i: usize, j: usize| values[i * nt + j];

    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for i in 0..nr {
        for j in 0..nt {
            let v = at(i, j);
            let mut is_max = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= nr as i64 || jj >= nt as i64 {
                        continue;
                    }
                    if at(ii as usize, jj as usize) >= v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((i, j));
            }
        }
    }
    let by_value_desc = |a: &(usize, usize), b: &(usize, usize)| {
        at(b.0, b.1).total_cmp(&at(a.0, a.1)).then(a.cmp(b))
    };
    candidates.sort_by(by_value_desc);

    let mut peaks: Vec<(usize, usize)> = Vec::with_capacity(k);
    for c in candidates {
        if peaks.len() == k {
            break;
        }
        let separated = peaks.iter().all(|p| {
            let di = p.0.abs_diff(c.0);
            let dj = p.1.abs_diff(c.1);
            di.max(dj) >= min_separation
        });
        if separated {
            peaks.push(c);
        }
    }
    if peaks.len() < k {
        let mut rest: Vec<(usize, usize)> = (0..nr)
            .flat_map(|i| (0..nt).map(move |j| (i, j)))
            .filter(|p| !peaks.contains(p))
            .collect();
        rest.sort_by(by_value_desc);
        peaks.extend(rest.into_iter().take(k - peaks.len()));
    }
    Ok(peaks)
}

/// Pairing cost |r̂ - r|/r + |θ̂ - θ|.
pub fn association_cost(estimate: &PolarLocation, truth: &PolarLocation) -> f64 {
    (estimate.r - truth.r).abs() / truth.r + (estimate.theta - truth.theta).abs()
}

/// Minimum-cost bijection from estimates to users; `result[p]` is the user
/// assigned to estimate `p`.
pub fn associate_estimates(peaks: &[PolarLocation], truth: &[PolarLocation]) -> Result<Vec<usize>> {
    if peaks.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} users",
            peaks.len(),
            truth.len()
        )));
    }
    let cost: Vec<Vec<f64>> = peaks
        .iter()
        .map(|p| truth.iter().map(|t| association_cost(p, t)).collect())
        .collect();
    Ok(hungarian(&cost))
}

/// Hungarian algorithm with potentials, O(n³). Square cost matrix.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[row_of_col[col] - 1] = col - 1;
    }
    assignment
}

/// Outcome of one localization run.
#[derive(Debug, Clone)]
pub struct MusicResult {
    pub grid: MusicGrid,
    pub spectrum: Spectrum,
    /// Peaks in selection order.
    pub peaks: Vec<PolarLocation>,
    /// `association[p]` is the user index for peak `p`.
    pub association: Vec<usize>,
}

impl MusicResult {
    /// Estimates reordered so that entry k belongs to user k.
    pub fn estimates_by_user(&self) -> Vec<PolarLocation> {
        let mut out = self.peaks.clone();
        for (p, &user) in self.association.iter().enumerate() {
            out[user] = self.peaks[p];
        }
        out
    }
}

/// Peak search and association on an already evaluated spectrum.
pub fn locate_users(
    spectrum: Spectrum,
    grid: &MusicGrid,
    truth: &[PolarLocation],
    min_separation: usize,
) -> Result<MusicResult> {
    let idx = find_peaks(&spectrum, truth.len(), min_separation)?;
    let peaks: Vec<PolarLocation> = idx.iter().map(|&(i, j)| grid.location(i, j)).collect();
    let association = associate_estimates(&peaks, truth)?;
    Ok(MusicResult { grid: grid.clone(), spectrum, peaks, association })
}

/// Writes `r_m,theta_deg,spectrum_value` rows.
pub fn write_spectrum_csv<W: Write>(out: &mut W, grid: &MusicGrid, spectrum: &Spectrum) -> Result<()> {
    writeln!(out, "r_m,theta_deg,spectrum_value")?;
    for i in 0..grid.n_r() {
        for j in 0..grid.n_theta() {
            writeln!(
                out,
                "{},{},{}",
                grid.r_values[i],
                grid.theta_values[j].to_degrees(),
                spectrum.value(i, j)
            )?;
        }
    }
    Ok(())
}
