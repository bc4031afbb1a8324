//! Closed-form two- and three-antenna spectrum analysis and the statistical
//! fits used for distance-estimation error (Gamma model, quartic variance law).

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CarrierConfig;

/// Magnitudes and phases of noise-eigenvector entries (u_1, u_2, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVectorPhases {
    pub magnitudes: Vec<f64>,
    /// In (-π, π].
    pub phases: Vec<f64>,
}

impl NoiseVectorPhases {
    pub fn new(magnitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != phases.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} magnitudes vs {} phases",
                magnitudes.len(),
                phases.len()
            )));
        }
        if magnitudes.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("magnitudes must be finite and >= 0".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("noise-vector phase"));
        }
        let phases = phases.into_iter().map(wrap_phase).collect();
        Ok(Self { magnitudes, phases })
    }

    pub fn from_vector(u: &DVector<Complex64>) -> Result<Self> {
        Self::new(u.iter().map(|z| z.norm()).collect(), u.iter().map(|z| z.arg()).collect())
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "need {n} noise-vector entries, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Maps a phase into (-π, π].
pub fn wrap_phase(p: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// φ2 - φ1 mapped into (0, 2π].
pub fn phase_gap(phases: &NoiseVectorPhases) -> f64 {
    use std::f64::consts::PI;
    let g = (phases.phases[1] - phases.phases[0]).rem_euclid(2.0 * PI);
    if g == 0.0 {
        2.0 * PI
    } else {
        g
    }
}

fn two_antenna_distances(r: f64, theta: f64, d: f64) -> (f64, f64) {
    let base = r * r + d * d / 4.0;
    let cross = r * d * theta.sin();
    ((base + cross).sqrt(), (base - cross).sqrt())
}

/// |u1|² + |u2|² + 2|u1||u2|cos(2π/λ (r̄0 - r̄1) + φ1 - φ2).
pub fn denom_two_antenna(
    phases: &NoiseVectorPhases,
    r: f64,
    theta: f64,
    d: f64,
    carrier: &CarrierConfig,
) -> Result<f64> {
    phases.expect_len(2)?;
    let (m, p) = (&phases.magnitudes, &phases.phases);
    let (r0, r1) = two_antenna_distances(r, theta, d);
    let arg = carrier.wavenumber() * (r0 - r1) + p[0] - p[1];
    Ok(m[0] * m[0] + m[1] * m[1] + 2.0 * m[0] * m[1] * arg.cos())
}

/// Ψ = λ/(2π)((2M+1)π - φ1 + φ2), with φ2 - φ1 taken in (0, 2π].
pub fn psi(phases: &NoiseVectorPhases, m: i64, carrier: &CarrierConfig) -> f64 {
    use std::f64::consts::PI;
    carrier.wavelength() / (2.0 * PI) * ((2 * m + 1) as f64 * PI + phase_gap(phases))
}

/// Closed-form distance for a given integer M; `InvalidM` when the squared
/// distance is not positive.
pub fn closed_form_distance_n2(
    phases: &NoiseVectorPhases,
    theta: f64,
    d: f64,
    carrier: &CarrierConfig,
    m: i64,
) -> Result<f64> {
    phases.expect_len(2)?;
    if !(d > 0.0) {
        return Err(Error::InvalidParameter("spacing must be positive".into()));
    }
    let p = psi(phases, m, carrier);
    let kappa = d * d / 2.0 - p * p;
    let num = d.powi(4) / 4.0 - kappa * kappa;
    let den = 4.0 * kappa - 2.0 * d * d + 4.0 * d * d * theta.sin().powi(2);
    let radicand = num / den;
    if !(radicand > 0.0) || !radicand.is_finite() {
        return Err(Error::InvalidM { m, radicand });
    }
    Ok(radicand.sqrt())
}

/// Smallest non-negative integer M with M ≥ d/λ - 1.
pub fn m_lower_bound(d: f64, carrier: &CarrierConfig) -> i64 {
    let raw = d / carrier.wavelength() - 1.0;
    // Guard against d/λ landing a hair above an integer.
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (snapped as i64).max(0)
}

pub const DEFAULT_M_SEARCH_WIDTH: usize = 8;

/// Candidate M from the lower bound over `search_width` values; keeps the one
/// whose distance minimises the two-antenna denominator (ties go to lower M).
pub fn select_m(
    phases: &NoiseVectorPhases,
    theta: f64,
    d: f64,
    carrier: &CarrierConfig,
    search_width: usize,
) -> Result<(i64, f64)> {
    if search_width == 0 {
        return Err(Error::InvalidParameter("search width must be >= 1".into()));
    }
    let lo = m_lower_bound(d, carrier);
    select_m_in(phases, theta, d, carrier, lo..=lo + search_width as i64 - 1)
}

pub fn select_m_in(
    phases: &NoiseVectorPhases,
    theta: f64,
    d: f64,
    carrier: &CarrierConfig,
    candidates: RangeInclusive<i64>,
) -> Result<(i64, f64)> {
    let mut best: Option<(i64, f64, f64)> = None;
    for m in candidates {
        let r = match closed_form_distance_n2(phases, theta, d, carrier, m) {
            Ok(r) => r,
            Err(Error::InvalidM { .. }) => continue,
            Err(e) => return Err(e),
        };
        let value = denom_two_antenna(phases, r, theta, d, carrier)?;
        if best.map_or(true, |(_, _, v)| value < v) {
            best = Some((m, r, value));
        }
    }
    best.map(|(m, r, _)| (m, r)).ok_or(Error::NoValidCandidate)
}

/// Three-antenna, two-user denominator: Σ|u|² plus the three cosine terms.
pub fn denom_three_antenna(
    phases: &NoiseVectorPhases,
    r: f64,
    theta: f64,
    d: f64,
    carrier: &CarrierConfig,
) -> Result<f64> {
    phases.expect_len(3)?;
    let (m, p) = (&phases.magnitudes, &phases.phases);
    let k = carrier.wavenumber();
    let base = r * r + d * d;
    let cross = 2.0 * r * d * theta.sin();
    let r0 = (base + cross).sqrt();
    let r2 = (base - cross).sqrt();
    let energy: f64 = m.iter().map(|x| x * x).sum();
    Ok(energy
        + 2.0 * m[0] * m[1] * (k * (r - r0) + p[1] - p[0]).cos()
        + 2.0 * m[0] * m[2] * (k * (r2 - r0) + p[2] - p[0]).cos()
        + 2.0 * m[1] * m[2] * (k * (r2 - r) + p[2] - p[1]).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    /// Shape μ.
    pub shape: f64,
    /// Scale ν.
    pub scale: f64,
}

impl GammaFit {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Sample mean and unbiased variance.
pub fn mean_variance(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples(format!("need >= 2 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// Method-of-moments Gamma fit: μ = mean²/var, ν = var/mean.
pub fn gamma_fit(samples: &[f64]) -> Result<GammaFit> {
    if samples.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateSamples("samples must be positive and finite".into()));
    }
    let (mean, var) = mean_variance(samples)?;
    if !(var > 0.0) {
        return Err(Error::DegenerateSamples("zero variance".into()));
    }
    Ok(GammaFit { shape: mean * mean / var, scale: var / mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// η from the fit with the exponent pinned at 4.
    pub eta: f64,
    /// Free log-log slope.
    pub exponent: f64,
    /// Intercept coefficient of the free fit.
    pub eta_free: f64,
}

pub const QUARTIC_EXPONENT: f64 = 4.0;

/// Least squares of log ζ² on log r.
pub fn variance_power_law_fit(r_values: &[f64], variances: &[f64]) -> Result<PowerLawFit> {
    if r_values.len() != variances.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} distances vs {} variances",
            r_values.len(),
            variances.len()
        )));
    }
    if r_values.len() < 2 {
        return Err(Error::DegenerateSamples("need >= 2 points".into()));
    }
    if r_values.iter().chain(variances).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateSamples("power-law inputs must be positive".into()));
    }
    let xs: Vec<f64> = r_values.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateSamples("distances must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let eta_free = (my - slope * mx).exp();
    let eta = (my - QUARTIC_EXPONENT * mx).exp();
    Ok(PowerLawFit { eta, exponent: slope, eta_free })
}

/// Histogram CSV with a single `sample_value` column.
pub fn write_samples_csv(path: &Path, samples: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample_value")?;
    for s in samples {
        writeln!(f, "{s:.17e}")?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitExport {
    pub mu: f64,
    pub nu: f64,
    pub eta: Option<f64>,
    pub exponent: Option<f64>,
}

pub fn write_fit_json(path: &Path, fit: &FitExport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(fit)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn carrier() -> CarrierConfig {
        CarrierConfig::ghz(100.0).unwrap()
    }

    #[test]
    fn bound_arithmetic() {
        let c = carrier();
        let lam = c.wavelength();
        assert_eq!(m_lower_bound(9.0 * lam, &c), 8);
        assert_eq!(m_lower_bound(lam, &c), 0);
        assert_eq!(m_lower_bound(lam / 2.0, &c), 0);
        assert_eq!(m_lower_bound(3.5 * lam, &c), 3);
    }

    #[test]
    fn silent_second_entry_is_flat() {
        let c = carrier();
        let ph = NoiseVectorPhases::new(vec![0.7, 0.0], vec![0.3, 1.0]).unwrap();
        for r in [0.01, 0.1, 1.0] {
            let v = denom_two_antenna(&ph, r, 0.4, 0.01, &c).unwrap();
            assert!((v - 0.49).abs() < 1e-15);
        }
    }

    #[test]
    fn phase_wrap_and_m_shift_leave_distance_unchanged() {
        let c = carrier();
        let d = 9.0 * c.wavelength();
        let a = NoiseVectorPhases::new(vec![0.6, 0.8], vec![0.2, -0.4]).unwrap();
        // φ2 - φ1 = -0.6 is mapped into (0, 2π]; Ψ(M) for that is Ψ(M+1) for -0.6 raw.
        let g = phase_gap(&a);
        assert!((g - (2.0 * PI - 0.6)).abs() < 1e-12);
        let psi_a = psi(&a, 8, &c);
        let raw = c.wavelength() / (2.0 * PI) * (19.0 * PI - 0.6);
        assert!((psi_a - raw).abs() < 1e-15);
        let b = NoiseVectorPhases::new(vec![0.6, 0.8], vec![0.2 + 2.0 * PI, -0.4 - 2.0 * PI]).unwrap();
        for m in 0..16 {
            let ra = closed_form_distance_n2(&a, 0.4, d, &c, m);
            let rb = closed_form_distance_n2(&b, 0.4, d, &c, m);
            match (ra, rb) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() < 1e-12 * x),
                (Err(_), Err(_)) => {}
                other => panic!("M={m}: {other:?}"),
            }
        }
    }

    #[test]
    fn closed_form_root_zeroes_the_cosine_branch() {
        let c = carrier();
        let lam = c.wavelength();
        let d = 9.0 * lam;
        let theta: f64 = 0.9;
        let ph = NoiseVectorPhases::new(vec![0.6, 0.8], vec![0.1, 1.7]).unwrap();
        let mut found = 0;
        for m in -12..=12 {
            // Only 0 < Ψ < d sin θ can satisfy r̄0 - r̄1 = Ψ; other roots come from squaring.
            let p = psi(&ph, m, &c);
            if p <= 0.0 || p >= d * theta.sin() {
                continue;
            }
            let r = closed_form_distance_n2(&ph, theta, d, &c, m).unwrap();
            let (r0, r1) = two_antenna_distances(r, theta, d);
            assert!((r0 - r1 - psi(&ph, m, &c)).abs() < 1e-9 * d);
            let v = denom_two_antenna(&ph, r, theta, d, &c).unwrap();
            assert!((v - (0.6f64 - 0.8).powi(2)).abs() < 1e-9, "M={m} v={v}");
            found += 1;
        }
        assert!(found > 0);
    }

    #[test]
    fn select_m_single_candidate_and_errors() {
        let c = carrier();
        let d = 9.0 * c.wavelength();
        let ph = NoiseVectorPhases::new(vec![0.6, 0.8], vec![0.1, 1.7]).unwrap();
        assert!(select_m(&ph, 0.3, d, &c, 0).is_err());
        let valid: Vec<i64> =
            (-20..=20).filter(|&m| closed_form_distance_n2(&ph, 0.3, d, &c, m).is_ok()).collect();
        let m = valid[0];
        let (sel, r) = select_m_in(&ph, 0.3, d, &c, m..=m).unwrap();
        assert_eq!(sel, m);
        assert_eq!(r, closed_form_distance_n2(&ph, 0.3, d, &c, m).unwrap());
        let bad = (-40..=40).find(|&m| closed_form_distance_n2(&ph, 0.3, d, &c, m).is_err()).unwrap();
        assert!(matches!(select_m_in(&ph, 0.3, d, &c, bad..=bad), Err(Error::NoValidCandidate)));
    }

    #[test]
    fn three_antenna_symmetric_profile() {
        let c = carrier();
        let d = 9.0 * c.wavelength();
        let ph = NoiseVectorPhases::new(vec![0.5; 3], vec![0.0; 3]).unwrap();
        let v: Vec<f64> = (1..200)
            .map(|i| denom_three_antenna(&ph, 0.005 * i as f64, 0.0, d, &c).unwrap())
            .collect();
        assert!(v.iter().all(|x| *x >= -1e-12 && *x <= 2.25 + 1e-12));
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(hi - lo > 0.5);
    }

    #[test]
    fn gamma_moment_identities() {
        let s = [1.5, 2.5, 1.5, 2.5, 2.0];
        let (m, v) = mean_variance(&s).unwrap();
        let fit = gamma_fit(&s).unwrap();
        assert!((fit.mean() - m).abs() < 1e-14);
        assert!((fit.variance() - v).abs() < 1e-14);
        let direct = gamma_fit(&[1.0, 2.0, 3.0]).unwrap();
        assert!((direct.shape - 4.0).abs() < 1e-14);
        assert!((direct.scale - 0.5).abs() < 1e-14);
        assert!(gamma_fit(&[1.0, 1.0]).is_err());
        assert!(gamma_fit(&[1.0, -1.0]).is_err());
        assert!(gamma_fit(&[1.0]).is_err());
    }

    #[test]
    fn exact_quartic_recovered() {
        let r: Vec<f64> = (1..=5).map(|i| 0.1 * i as f64).collect();
        let v: Vec<f64> = r.iter().map(|x| 0.0011 * x.powi(4)).collect();
        let fit = variance_power_law_fit(&r, &v).unwrap();
        assert!((fit.exponent - 4.0).abs() < 1e-10);
        assert!((fit.eta / 0.0011 - 1.0).abs() < 1e-10);
        assert!((fit.eta_free / 0.0011 - 1.0).abs() < 1e-10);
        assert!(variance_power_law_fit(&[1.0], &[1.0]).is_err());
        assert!(variance_power_law_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn exports_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_samples_csv(&p, &[1.0, 2.5]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let vals: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(text.lines().next(), Some("sample_value"));
        assert_eq!(vals, vec![1.0, 2.5]);
        let j = dir.path().join("fit.json");
        let fit = FitExport { mu: 8.0, nu: 0.25, eta: None, exponent: Some(4.0) };
        write_fit_json(&j, &fit).unwrap();
        let back: FitExport = serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
        assert_eq!(back, fit);
    }
}
