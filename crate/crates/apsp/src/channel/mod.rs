//! Angle-delay domain channel model.
//!
//! The channel of one user terminal (UT) is carried by two matrices:
//!
//! * the angle-delay channel response matrix (ADCRM) `H`, an `M x Ng` complex
//!   matrix of independent zero-mean Gaussian entries, and
//! * the angle-delay channel power matrix (ADCPM) `Omega`, the elementwise
//!   variances `E |H_{ij}|^2`, normalized so `sum(Omega) = M * Nc`.
//!
//! The space-frequency response seen on the array/subcarrier grid is
//! `G = V_M H F^T` with the centered DFT `V_M` and the tall DFT
//! `F = F_{Nc x Ng}`; both directions are evaluated with FFTs. `Omega` is
//! discretized from a continuous angle-delay spectrum (exponential power
//! delay profile, per-tap Laplacian power angle spectrum) on the grid
//! `theta_i = arcsin(2 i / M - 1)`, which is exactly the sampling for which
//! the separable covariance approximation becomes exact as `M` grows. The
//! small-scale dense covariance builder `build_sfccm_small` exists to verify
//! that convergence numerically.
//!
//! Temporal evolution across OFDM symbols is stationary per element with the
//! Clarke-Jakes correlation `rho(dl) = J0(2 pi nu Tsym dl)`.

pub mod scenario;

pub use scenario::{desk_config, scenario_profiles, table_config, Scenario};

use crate::error::{ApspError, Result};
use crate::rng::{derive_rng, tags};
use crate::scalar::{fl, Scalar};
use crate::transforms::{
    bessel_j0, centered_dft_matrix, centered_transform, centered_transform_adjoint,
    dft_right_expand, dft_right_reduce, steering_vector, ComplexMatrix,
};
use ndarray::{Array1, Array2};
use num_complex::Complex;
use rand::Rng;

/// OFDM / array geometry and training powers shared by a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig<T: Scalar> {
    m: usize,
    nc: usize,
    ng: usize,
    k: usize,
    ts: T,
    rho_tr: T,
    sigma_xtr: T,
}

impl<T: Scalar> SystemConfig<T> {
    /// New configuration with unit training power and unit training SNR.
    ///
    /// `m` antennas (even), `nc` subcarriers, `ng` guard samples
    /// (`0 < ng <= nc`), system sampling interval `ts` seconds, `k` user
    /// terminals.
    pub fn new(m: usize, nc: usize, ng: usize, ts: T, k: usize) -> Result<Self> {
        if m == 0 || m % 2 != 0 {
            return Err(ApspError::InvalidDimension(format!(
                "antenna count m = {m} must be positive and even"
            )));
        }
        if nc == 0 || ng == 0 || ng > nc {
            return Err(ApspError::InvalidDimension(format!(
                "need 0 < ng <= nc, got nc = {nc}, ng = {ng}"
            )));
        }
        if k == 0 {
            return Err(ApspError::InvalidDimension("k = 0 user terminals".into()));
        }
        if !ts.is_finite() || ts <= T::zero() {
            return Err(ApspError::Domain(format!("sampling interval ts = {ts}")));
        }
        Ok(Self {
            m,
            nc,
            ng,
            k,
            ts,
            rho_tr: T::one(),
            sigma_xtr: T::one(),
        })
    }

    pub fn with_rho_tr(mut self, rho_tr: T) -> Result<Self> {
        if !rho_tr.is_finite() || rho_tr <= T::zero() {
            return Err(ApspError::Domain(format!("rho_tr = {rho_tr}")));
        }
        self.rho_tr = rho_tr;
        Ok(self)
    }

    pub fn with_sigma_xtr(mut self, sigma_xtr: T) -> Result<Self> {
        if !sigma_xtr.is_finite() || sigma_xtr <= T::zero() {
            return Err(ApspError::Domain(format!("sigma_xtr = {sigma_xtr}")));
        }
        self.sigma_xtr = sigma_xtr;
        Ok(self)
    }

    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(ApspError::InvalidDimension("k = 0 user terminals".into()));
        }
        self.k = k;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn nc(&self) -> usize {
        self.nc
    }
    pub fn ng(&self) -> usize {
        self.ng
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn ts(&self) -> T {
        self.ts
    }
    /// OFDM symbol duration including the guard interval, `(nc + ng) * ts`.
    pub fn tsym(&self) -> T {
        fl::<T>((self.nc + self.ng) as f64) * self.ts
    }
    /// Training SNR `sigma_xtr / sigma_ztr`.
    pub fn rho_tr(&self) -> T {
        self.rho_tr
    }
    pub fn sigma_xtr(&self) -> T {
        self.sigma_xtr
    }
    /// Noise power implied by the training SNR.
    pub fn sigma_ztr(&self) -> T {
        self.sigma_xtr / self.rho_tr
    }
}

/// One resolvable propagation path of a UT.
#[derive(Debug, Clone, PartialEq)]
pub struct TapProfile<T: Scalar> {
    /// Delay in sampling intervals, within `[0, Ng)`.
    pub delay_bin: usize,
    /// Nonnegative tap power, relative to the other taps of the same UT.
    pub relative_power: T,
    /// Mean angle of arrival in radians.
    pub mean_aoa: T,
    /// Laplacian angle spread (scale of `exp(-sqrt(2) |theta - mean| / spread)`).
    pub angle_spread: T,
}

/// Statistical description of one UT: mobility plus per-tap angle/delay data.
#[derive(Debug, Clone, PartialEq)]
pub struct UtProfile<T: Scalar> {
    /// Doppler frequency `nu` in Hz.
    pub doppler_nu: T,
    pub taps: Vec<TapProfile<T>>,
}

impl<T: Scalar> UtProfile<T> {
    /// Check the profile against a configuration.
    pub fn validate(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if !self.doppler_nu.is_finite() || self.doppler_nu < T::zero() {
            return Err(ApspError::Domain(format!(
                "doppler_nu = {} must be finite and nonnegative",
                self.doppler_nu
            )));
        }
        if self.taps.is_empty() {
            return Err(ApspError::InvalidArgument("profile has no taps".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut total = T::zero();
        for tap in &self.taps {
            if tap.delay_bin >= cfg.ng() {
                return Err(ApspError::OutOfRange(format!(
                    "tap delay bin {} >= ng = {}",
                    tap.delay_bin,
                    cfg.ng()
                )));
            }
            if !seen.insert(tap.delay_bin) {
                return Err(ApspError::InvalidArgument(format!(
                    "duplicate tap delay bin {}",
                    tap.delay_bin
                )));
            }
            if !tap.relative_power.is_finite() || tap.relative_power < T::zero() {
                return Err(ApspError::Domain(format!(
                    "tap power {} must be nonnegative",
                    tap.relative_power
                )));
            }
            if !tap.mean_aoa.is_finite()
                || tap.mean_aoa < -T::FRAC_PI_2()
                || tap.mean_aoa > T::FRAC_PI_2()
            {
                return Err(ApspError::Domain(format!(
                    "mean AoA {} outside [-pi/2, pi/2]",
                    tap.mean_aoa
                )));
            }
            if !tap.angle_spread.is_finite() || tap.angle_spread <= T::zero() {
                return Err(ApspError::Domain(format!(
                    "angle spread {} must be positive",
                    tap.angle_spread
                )));
            }
            total = total + tap.relative_power;
        }
        if total <= T::zero() {
            return Err(ApspError::InvalidArgument(
                "tap powers sum to zero".into(),
            ));
        }
        Ok(())
    }
}

/// Angle-delay channel power matrix (`M x Ng`, nonnegative entries summing to
/// `M * Nc`).
#[derive(Debug, Clone, PartialEq)]
pub struct Adcpm<T: Scalar> {
    values: Array2<T>,
}

impl<T: Scalar> Adcpm<T> {
    /// Wrap a raw nonnegative matrix (no rescaling is applied).
    pub fn from_values(values: Array2<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(ApspError::Domain(
                "power matrix entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn ng(&self) -> usize {
        self.values.ncols()
    }

    /// Total power `sum_ij Omega_ij`.
    pub fn total(&self) -> T {
        self.values.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    pub fn max_entry(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }
}

/// Angle-delay channel response matrix (`M x Ng` complex).
#[derive(Debug, Clone, PartialEq)]
pub struct Adcrm<T: Scalar> {
    values: ComplexMatrix<T>,
}

impl<T: Scalar> Adcrm<T> {
    pub fn from_values(values: ComplexMatrix<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &ComplexMatrix<T> {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn ng(&self) -> usize {
        self.values.ncols()
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> T {
        self.values
            .iter()
            .map(|z| z.norm_sqr())
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Space-frequency channel response matrix (`M x Nc` complex).
#[derive(Debug, Clone, PartialEq)]
pub struct Sfcrm<T: Scalar> {
    values: ComplexMatrix<T>,
}

impl<T: Scalar> Sfcrm<T> {
    pub fn from_values(values: ComplexMatrix<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &ComplexMatrix<T> {
        &self.values
    }
}

// ---------------------------------------------------------------------------
// Continuous angle-delay spectrum backing both the ADCPM discretization and
// the dense covariance quadrature.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct SpectrumTerm<T> {
    pub bin: usize,
    /// `relative_power / (total_power * continuous Laplacian mass)`, so the
    /// spectrum integrates to one over angle and delay together.
    pub weight: T,
    pub mean: T,
    pub spread: T,
    /// Power fraction of this tap (used by the narrow-spread fallback).
    pub fraction: T,
}

#[derive(Debug, Clone)]
pub(crate) struct AngleDelaySpectrum<T> {
    pub terms: Vec<SpectrumTerm<T>>,
}

/// Mass of the truncated Laplacian `exp(-sqrt(2)|theta - mean| / spread)` on
/// `[-pi/2, pi/2]` (no wrap-around).
fn laplacian_mass<T: Scalar>(mean: T, spread: T) -> T {
    let r = fl::<T>(2.0).sqrt() / spread;
    let lo = (-(T::FRAC_PI_2() + mean) * r).exp();
    let hi = (-(T::FRAC_PI_2() - mean) * r).exp();
    (fl::<T>(2.0) - lo - hi) / r
}

impl<T: Scalar> AngleDelaySpectrum<T> {
    pub fn from_profile(profile: &UtProfile<T>, cfg: &SystemConfig<T>) -> Result<Self> {
        profile.validate(cfg)?;
        let total: T = profile
            .taps
            .iter()
            .map(|t| t.relative_power)
            .fold(T::zero(), |a, b| a + b);
        let terms = profile
            .taps
            .iter()
            .filter(|t| t.relative_power > T::zero())
            .map(|t| {
                let fraction = t.relative_power / total;
                SpectrumTerm {
                    bin: t.delay_bin,
                    weight: fraction / laplacian_mass(t.mean_aoa, t.angle_spread),
                    mean: t.mean_aoa,
                    spread: t.angle_spread,
                    fraction,
                }
            })
            .collect();
        Ok(Self { terms })
    }

    /// Evaluate the spectrum at angle `theta` and delay bin `bin`.
    pub fn eval(&self, theta: T, bin: usize) -> T {
        let r = fl::<T>(2.0).sqrt();
        self.terms
            .iter()
            .filter(|t| t.bin == bin)
            .map(|t| t.weight * (-(theta - t.mean).abs() * r / t.spread).exp())
            .fold(T::zero(), |a, b| a + b)
    }

    /// Delay bins with nonzero power, ascending.
    pub fn bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.terms.iter().map(|t| t.bin).collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    }
}

/// Angle grid `theta_i = arcsin(2 i / M - 1)` for `i = 0..=M`; the last node
/// is `pi/2` and `theta_{i+1} - theta_i` is the cell width of row `i`.
pub(crate) fn angle_grid<T: Scalar>(m: usize) -> Vec<T> {
    (0..=m)
        .map(|i| (fl::<T>(2.0 * i as f64 / m as f64) - T::one()).asin())
        .collect()
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Discretize a UT profile into its ADCPM.
///
/// Row `i` of the grid carries the cell `[theta_i, theta_{i+1})` with
/// `theta_i = arcsin(2 i / M - 1)`; each entry is the left-endpoint rule
/// `M Nc (theta_{i+1} - theta_i) S(theta_i, tau_j)` for the continuous
/// spectrum `S`, and the result is rescaled so the total is exactly `M * Nc`.
/// A tap whose angle spread is too narrow for the grid (all exponentials
/// underflow) degenerates to a point mass on the nearest grid row.
pub fn build_adcpm<T: Scalar>(profile: &UtProfile<T>, cfg: &SystemConfig<T>) -> Result<Adcpm<T>> {
    let spectrum = AngleDelaySpectrum::from_profile(profile, cfg)?;
    let m = cfg.m();
    let grid = angle_grid::<T>(m);
    let mut omega = Array2::<T>::zeros((m, cfg.ng()));
    let scale = fl::<T>((m * cfg.nc()) as f64);
    let r = fl::<T>(2.0).sqrt();

    for term in &spectrum.terms {
        let mut col = Array1::<T>::zeros(m);
        let mut mass = T::zero();
        for i in 0..m {
            // left-endpoint rule: cell width times S(theta_i)
            let width = grid[i + 1] - grid[i];
            let val = width * term.weight * (-(grid[i] - term.mean).abs() * r / term.spread).exp();
            col[i] = val;
            mass = mass + val;
        }
        if mass > T::zero() {
            for i in 0..m {
                omega[[i, term.bin]] = omega[[i, term.bin]] + scale * col[i];
            }
        } else {
            // spread far below grid resolution: place the tap on the nearest row
            let mut best = 0usize;
            let mut best_d = T::infinity();
            for i in 0..m {
                let d = (grid[i] - term.mean).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            omega[[best, term.bin]] = omega[[best, term.bin]] + scale * term.fraction;
        }
    }

    let total = omega.iter().copied().fold(T::zero(), |a, b| a + b);
    if !(total > T::zero()) {
        return Err(ApspError::InvalidArgument(
            "profile produced an all-zero power matrix".into(),
        ));
    }
    let factor = scale / total;
    omega.mapv_inplace(|v| v * factor);
    Adcpm::from_values(omega)
}

/// Temporal correlation function (Clarke-Jakes): `J0(2 pi nu tsym dl)`.
pub fn tcf<T: Scalar>(doppler_nu: T, tsym: T, delta_ell: i64) -> Result<T> {
    if !doppler_nu.is_finite() || doppler_nu < T::zero() {
        return Err(ApspError::Domain(format!("doppler_nu = {doppler_nu}")));
    }
    if !tsym.is_finite() || tsym <= T::zero() {
        return Err(ApspError::Domain(format!("tsym = {tsym}")));
    }
    bessel_j0(T::TAU() * doppler_nu * tsym * fl::<T>(delta_ell as f64))
}

/// Draw an ADCRM with independent `CN(0, Omega_ij)` entries.
pub fn sample_adcrm<T: Scalar, R: Rng + ?Sized>(omega: &Adcpm<T>, rng: &mut R) -> Adcrm<T> {
    let half = fl::<T>(0.5);
    let values = omega.values().mapv(|v| {
        let s = (v * half).sqrt();
        Complex::new(
            s * T::standard_normal(rng),
            s * T::standard_normal(rng),
        )
    });
    Adcrm::from_values(values)
}

/// Seeded convenience wrapper around [`sample_adcrm`].
pub fn sample_adcrm_seeded<T: Scalar>(omega: &Adcpm<T>, seed: u64) -> Adcrm<T> {
    let mut rng = derive_rng(seed, &[tags::CHANNEL]);
    sample_adcrm(omega, &mut rng)
}

/// Evolve an ADCRM by one Clarke-Jakes step of correlation `rho`:
/// `H' = rho H + sqrt(1 - rho^2) W` with `W` a fresh draw from `Omega`.
/// The pair `(H, H')` then has the exact lag correlation `rho` per element.
pub fn evolve_adcrm<T: Scalar, R: Rng + ?Sized>(
    h: &Adcrm<T>,
    omega: &Adcpm<T>,
    rho: T,
    rng: &mut R,
) -> Result<Adcrm<T>> {
    if !rho.is_finite() || rho.abs() > T::one() {
        return Err(ApspError::Domain(format!("correlation rho = {rho}")));
    }
    if h.values().dim() != omega.values().dim() {
        return Err(ApspError::DimensionMismatch(format!(
            "response {:?} vs power {:?}",
            h.values().dim(),
            omega.values().dim()
        )));
    }
    let innov = (T::one() - rho * rho).sqrt();
    let w = sample_adcrm(omega, rng);
    let values = ndarray::Zip::from(h.values())
        .and(w.values())
        .map_collect(|a, b| a.scale(rho) + b.scale(innov));
    Ok(Adcrm::from_values(values))
}

/// `G = V_M H F_{Nc x Ng}^T`, evaluated with FFTs.
pub fn adcrm_to_sfcrm<T: Scalar>(h: &Adcrm<T>, cfg: &SystemConfig<T>) -> Result<Sfcrm<T>> {
    if h.m() != cfg.m() || h.ng() != cfg.ng() {
        return Err(ApspError::DimensionMismatch(format!(
            "response is {}x{}, config wants {}x{}",
            h.m(),
            h.ng(),
            cfg.m(),
            cfg.ng()
        )));
    }
    let narrow = centered_transform(h.values());
    Ok(Sfcrm::from_values(dft_right_expand(&narrow, cfg.nc())))
}

/// `H = V_M^H G conj(F_{Nc x Ng})`, the exact inverse of [`adcrm_to_sfcrm`]
/// on its range.
pub fn sfcrm_to_adcrm<T: Scalar>(g: &Sfcrm<T>, cfg: &SystemConfig<T>) -> Result<Adcrm<T>> {
    let (m, nc) = g.values().dim();
    if m != cfg.m() || nc != cfg.nc() {
        return Err(ApspError::DimensionMismatch(format!(
            "space-frequency response is {m}x{nc}, config wants {}x{}",
            cfg.m(),
            cfg.nc()
        )));
    }
    let narrow = dft_right_reduce(g.values(), cfg.ng());
    Ok(Adcrm::from_values(centered_transform_adjoint(&narrow)))
}

/// Extend an ADCPM to `M x Nc` with zero columns, cyclically shift it right
/// by `shift` columns, and truncate back to the first `Ng` columns. This is
/// the power matrix of a phase-shifted interferer as seen after pilot
/// decorrelation.
pub fn shifted_power_matrix<T: Scalar>(
    omega: &Adcpm<T>,
    shift: i64,
    cfg: &SystemConfig<T>,
) -> Result<Array2<T>> {
    if omega.m() != cfg.m() || omega.ng() != cfg.ng() {
        return Err(ApspError::DimensionMismatch(format!(
            "power matrix is {}x{}, config wants {}x{}",
            omega.m(),
            omega.ng(),
            cfg.m(),
            cfg.ng()
        )));
    }
    let nc = cfg.nc() as i64;
    let ng = cfg.ng();
    let s = shift.rem_euclid(nc) as usize;
    let v = omega.values();
    Ok(Array2::from_shape_fn((cfg.m(), ng), |(i, j)| {
        let src = (j + cfg.nc() - s) % cfg.nc();
        if src < ng {
            v[[i, src]]
        } else {
            T::zero()
        }
    }))
}

/// Extended (`M x Nc`) zero-padded and column-shifted copy of an ADCPM,
/// as used by the scheduler's overlap computations.
pub fn extended_shifted_adcpm<T: Scalar>(omega: &Adcpm<T>, shift: i64, nc: usize) -> Array2<T> {
    let ng = omega.ng();
    let s = shift.rem_euclid(nc as i64) as usize;
    let v = omega.values();
    Array2::from_shape_fn((omega.m(), nc), |(i, c)| {
        let src = (c + nc - s) % nc;
        if src < ng {
            v[[i, src]]
        } else {
            T::zero()
        }
    })
}

// ---------------------------------------------------------------------------
// Dense space-frequency covariance (small scale, for verification)
// ---------------------------------------------------------------------------

fn guard_dense_size(m: usize, nc: usize) -> Result<()> {
    const LIMIT: usize = 4096;
    if m * nc > LIMIT {
        return Err(ApspError::InstanceTooLarge(format!(
            "dense covariance needs (m * nc)^2 = {} complex entries; limit is {}^2 \
             (got m = {m}, nc = {nc})",
            (m * nc) * (m * nc),
            LIMIT
        )));
    }
    Ok(())
}

/// Assemble `R[(n_i M + m_i), (n_j M + m_j)] = sum_bin phase(n_i - n_j, bin)
/// * W_bin[m_i, m_j]` where `phase(dn, bin) = exp(-j 2 pi dn bin / Nc)`.
fn assemble_block_toeplitz<T: Scalar>(
    blocks: &[(usize, ComplexMatrix<T>)],
    m: usize,
    nc: usize,
) -> ComplexMatrix<T> {
    let dim = m * nc;
    // combined M x M block for every frequency offset dn
    let offsets: Vec<ComplexMatrix<T>> = (0..(2 * nc - 1))
        .map(|idx| {
            let dn = idx as i64 - (nc as i64 - 1);
            let mut acc: ComplexMatrix<T> = Array2::zeros((m, m));
            for (bin, w) in blocks {
                let ang = -T::TAU() * fl::<T>((dn * *bin as i64) as f64) / fl::<T>(nc as f64);
                let ph = Complex::from_polar(T::one(), ang);
                acc.zip_mut_with(w, |a, b| *a = *a + *b * ph);
            }
            acc
        })
        .collect();
    let mut r: ComplexMatrix<T> = Array2::zeros((dim, dim));
    for ni in 0..nc {
        for nj in 0..nc {
            let block = &offsets[(ni as i64 - nj as i64 + nc as i64 - 1) as usize];
            for mi in 0..m {
                for mj in 0..m {
                    r[[ni * m + mi, nj * m + mj]] = block[[mi, mj]];
                }
            }
        }
    }
    r
}

/// Dense space-frequency channel covariance of one UT, computed by direct
/// trapezoidal quadrature of the defining integral
/// `R = sum_q Int (f_q (x) v(theta)) (f_q (x) v(theta))^H S(theta, q Ts) d theta`
/// over `theta in [-pi/2, pi/2]` with `angle_grid_points` nodes.
///
/// The result indexes `vec(G)` column-major: entry `d = n * M + m` is antenna
/// `m` on subcarrier `n`. Memory grows as `(m * nc)^2`, so the builder
/// refuses instances with `m * nc > 4096`.
pub fn build_sfccm_small<T: Scalar>(
    profile: &UtProfile<T>,
    cfg: &SystemConfig<T>,
    angle_grid_points: usize,
) -> Result<ComplexMatrix<T>> {
    guard_dense_size(cfg.m(), cfg.nc())?;
    if angle_grid_points < 2 {
        return Err(ApspError::InvalidArgument(format!(
            "need at least 2 angle nodes, got {angle_grid_points}"
        )));
    }
    let spectrum = AngleDelaySpectrum::from_profile(profile, cfg)?;
    let m = cfg.m();
    let p = angle_grid_points;
    let h = T::PI() / fl::<T>((p - 1) as f64);

    let blocks: Vec<(usize, ComplexMatrix<T>)> = spectrum
        .bins()
        .into_iter()
        .map(|bin| {
            let mut w: ComplexMatrix<T> = Array2::zeros((m, m));
            for t in 0..p {
                let theta = -T::FRAC_PI_2() + h * fl::<T>(t as f64);
                let weight = if t == 0 || t == p - 1 {
                    h * fl::<T>(0.5)
                } else {
                    h
                };
                let s = spectrum.eval(theta, bin);
                if s <= T::zero() {
                    continue;
                }
                let v = steering_vector::<T>(m, theta).expect("grid angle in domain");
                // the 1/sqrt(M) and 1/sqrt(Nc) vector normalizations cancel
                // the M * Nc power scale, leaving the bare quadrature weight
                let c = weight * s;
                for a in 0..m {
                    for b in 0..m {
                        w[[a, b]] = w[[a, b]] + v[a] * v[b].conj() * c;
                    }
                }
            }
            (bin, w)
        })
        .collect();
    Ok(assemble_block_toeplitz(&blocks, m, cfg.nc()))
}

/// Separable approximation of the dense covariance implied by an ADCPM:
/// `(F (x) V) diag(vec Omega) (F (x) V)^H` with `F = F_{Nc x Ng}`, `V = V_M`.
/// Same indexing and size guard as [`build_sfccm_small`].
pub fn sfccm_from_adcpm<T: Scalar>(
    omega: &Adcpm<T>,
    cfg: &SystemConfig<T>,
) -> Result<ComplexMatrix<T>> {
    guard_dense_size(cfg.m(), cfg.nc())?;
    if omega.m() != cfg.m() || omega.ng() != cfg.ng() {
        return Err(ApspError::DimensionMismatch(format!(
            "power matrix is {}x{}, config wants {}x{}",
            omega.m(),
            omega.ng(),
            cfg.m(),
            cfg.ng()
        )));
    }
    let m = cfg.m();
    let v = centered_dft_matrix::<T>(m)?;
    let vh = v.t().mapv(|z| z.conj());
    let inv_nc = fl::<T>(1.0) / fl::<T>(cfg.nc() as f64);
    let blocks: Vec<(usize, ComplexMatrix<T>)> = (0..cfg.ng())
        .filter(|&q| omega.values().column(q).iter().any(|x| *x > T::zero()))
        .map(|q| {
            // V diag(Omega[:, q]) V^H / Nc
            let mut scaled = v.clone();
            for (mut col, &w) in scaled.columns_mut().into_iter().zip(omega.values().column(q)) {
                let f = w * inv_nc;
                col.mapv_inplace(|z| z.scale(f));
            }
            (q, scaled.dot(&vh))
        })
        .collect();
    Ok(assemble_block_toeplitz(&blocks, m, cfg.nc()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use ndarray::s;
    use num_complex::Complex64;

    fn test_cfg(m: usize, nc: usize, ng: usize) -> SystemConfig<f64> {
        SystemConfig::new(m, nc, ng, 32.6e-9, 2).unwrap()
    }

    fn two_tap_profile() -> UtProfile<f64> {
        UtProfile {
            doppler_nu: 0.0,
            taps: vec![
                TapProfile {
                    delay_bin: 0,
                    relative_power: 1.0,
                    mean_aoa: -0.35,
                    angle_spread: 0.26,
                },
                TapProfile {
                    delay_bin: 2,
                    relative_power: 0.5,
                    mean_aoa: 0.44,
                    angle_spread: 0.26,
                },
            ],
        }
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            SystemConfig::<f64>::new(7, 64, 8, 1e-8, 2),
            Err(ApspError::InvalidDimension(_))
        ));
        assert!(matches!(
            SystemConfig::<f64>::new(8, 64, 65, 1e-8, 2),
            Err(ApspError::InvalidDimension(_))
        ));
        assert!(matches!(
            SystemConfig::<f64>::new(8, 64, 8, -1.0, 2),
            Err(ApspError::Domain(_))
        ));
        let cfg = test_cfg(8, 64, 8);
        assert!((cfg.tsym() - 72.0 * 32.6e-9).abs() < 1e-20);
        assert!(cfg.with_rho_tr(0.0).is_err());
    }

    #[test]
    fn adcpm_total_is_m_nc() {
        let cfg = test_cfg(16, 64, 8);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let total = omega.total();
        let expect = (16 * 64) as f64;
        assert!(
            (total - expect).abs() <= 1e-9 * expect,
            "total = {total}, expect {expect}"
        );
        assert!(omega.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adcpm_identical_taps_have_equal_columns() {
        // uniform PDP, same angle statistics at two delays: equal column sums
        let cfg = test_cfg(16, 64, 8);
        let profile = UtProfile {
            doppler_nu: 0.0,
            taps: vec![
                TapProfile {
                    delay_bin: 0,
                    relative_power: 1.0,
                    mean_aoa: 0.2,
                    angle_spread: 0.1,
                },
                TapProfile {
                    delay_bin: 5,
                    relative_power: 1.0,
                    mean_aoa: 0.2,
                    angle_spread: 0.1,
                },
            ],
        };
        let omega = build_adcpm(&profile, &cfg).unwrap();
        let c0: f64 = omega.values().column(0).sum();
        let c5: f64 = omega.values().column(5).sum();
        assert!((c0 - c5).abs() <= 1e-9 * c0);
        // all other columns are empty
        let rest: f64 = (0..8)
            .filter(|&j| j != 0 && j != 5)
            .map(|j| omega.values().column(j).sum())
            .sum();
        assert_eq!(rest, 0.0);
    }

    #[test]
    fn adcpm_narrow_spread_concentrates_on_nearest_row() {
        let cfg = test_cfg(32, 64, 8);
        let mean = 0.31;
        let profile = UtProfile {
            doppler_nu: 0.0,
            taps: vec![TapProfile {
                delay_bin: 0,
                relative_power: 1.0,
                mean_aoa: mean,
                angle_spread: 1e-6,
            }],
        };
        let omega = build_adcpm(&profile, &cfg).unwrap();
        let grid = angle_grid::<f64>(32);
        let nearest = (0..32)
            .min_by(|&a, &b| {
                (grid[a] - mean)
                    .abs()
                    .partial_cmp(&(grid[b] - mean).abs())
                    .unwrap()
            })
            .unwrap();
        let total = omega.total();
        let col0: f64 = omega.values().column(0).sum();
        assert!(col0 >= 0.99 * total, "column share {}", col0 / total);
        assert!(
            omega.values()[[nearest, 0]] >= 0.99 * total,
            "row share {}",
            omega.values()[[nearest, 0]] / total
        );
    }

    #[test]
    fn adcpm_rejects_bad_taps() {
        let cfg = test_cfg(8, 64, 8);
        let mut profile = two_tap_profile();
        profile.taps[0].delay_bin = 8;
        assert!(matches!(
            build_adcpm(&profile, &cfg),
            Err(ApspError::OutOfRange(_))
        ));
        let mut profile = two_tap_profile();
        profile.taps[1].delay_bin = 0;
        assert!(matches!(
            build_adcpm(&profile, &cfg),
            Err(ApspError::InvalidArgument(_))
        ));
    }

    #[test]
    fn tcf_is_even_with_unit_peak() {
        let nu = 434.0;
        let tsym = 71.4e-6;
        assert_eq!(tcf(nu, tsym, 0).unwrap(), 1.0);
        for dl in 1..6i64 {
            let fwd = tcf(nu, tsym, dl).unwrap();
            let bwd = tcf(nu, tsym, -dl).unwrap();
            assert_eq!(fwd, bwd);
            let x = std::f64::consts::TAU * nu * tsym * dl as f64;
            assert!((fwd - bessel_j0(x).unwrap()).abs() < 1e-15);
        }
        assert!(tcf(-1.0, tsym, 1).is_err());
    }

    #[test]
    fn sampling_matches_prescribed_variances() {
        let cfg = test_cfg(8, 32, 4);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let trials = 20_000usize;
        let mut acc = Array2::<f64>::zeros((8, 4));
        for t in 0..trials {
            let mut rng = derive_rng(9, &[tags::CHANNEL, t as u64]);
            let h = sample_adcrm(&omega, &mut rng);
            acc.zip_mut_with(h.values(), |a, z| *a += z.norm_sqr());
        }
        acc.mapv_inplace(|v| v / trials as f64);
        for (est, truth) in acc.iter().zip(omega.values().iter()) {
            if *truth > 0.01 * omega.max_entry() {
                assert!(
                    (est - truth).abs() <= 0.05 * truth,
                    "variance {est} vs {truth}"
                );
            }
        }
        // mean approximately zero relative to the per-element deviation
        let mut mean = Complex64::new(0.0, 0.0);
        for t in 0..2000 {
            let mut rng = derive_rng(10, &[tags::CHANNEL, t as u64]);
            mean += sample_adcrm(&omega, &mut rng).values()[[0, 0]];
        }
        assert!((mean / 2000.0).norm() < 0.1 * omega.values()[[0, 0]].sqrt());
    }

    #[test]
    fn sampling_is_deterministic_and_zero_on_zero_power() {
        let cfg = test_cfg(8, 32, 4);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let a = sample_adcrm_seeded(&omega, 5);
        let b = sample_adcrm_seeded(&omega, 5);
        assert_eq!(a, b);
        let zero = Adcpm::<f64>::from_values(Array2::zeros((8, 4))).unwrap();
        let h = sample_adcrm_seeded(&zero, 5);
        assert!(h.values().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn evolve_endpoints_and_errors() {
        let cfg = test_cfg(8, 32, 4);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let h = sample_adcrm_seeded(&omega, 1);
        let mut rng = derive_rng(2, &[tags::EVOLVE]);
        let same = evolve_adcrm(&h, &omega, 1.0, &mut rng).unwrap();
        assert_eq!(same, h);
        let fresh = evolve_adcrm(&h, &omega, 0.0, &mut rng).unwrap();
        assert_ne!(fresh, h);
        assert!(evolve_adcrm(&h, &omega, 1.5, &mut rng).is_err());
        let wrong = Adcpm::from_values(Array2::zeros((4, 4))).unwrap();
        assert!(matches!(
            evolve_adcrm(&h, &wrong, 0.5, &mut rng),
            Err(ApspError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn evolve_has_requested_lag_correlation() {
        let cfg = test_cfg(8, 32, 4);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let rho = 0.8f64;
        let trials = 20_000usize;
        let mut corr = 0.0f64;
        let mut pow = 0.0f64;
        for t in 0..trials {
            let mut rng = derive_rng(77, &[tags::CHANNEL, t as u64]);
            let h = sample_adcrm(&omega, &mut rng);
            let h2 = evolve_adcrm(&h, &omega, rho, &mut rng).unwrap();
            for (a, b) in h.values().iter().zip(h2.values().iter()) {
                corr += (b * a.conj()).re;
                pow += a.norm_sqr();
            }
        }
        assert!(
            (corr / pow - rho).abs() < 0.01,
            "lag correlation {}",
            corr / pow
        );
    }

    #[test]
    fn space_frequency_transform_matches_explicit_matrices() {
        let cfg = test_cfg(4, 8, 3);
        let omega = build_adcpm(
            &UtProfile {
                doppler_nu: 0.0,
                taps: vec![TapProfile {
                    delay_bin: 1,
                    relative_power: 1.0,
                    mean_aoa: 0.1,
                    angle_spread: 0.3,
                }],
            },
            &cfg,
        )
        .unwrap();
        let h = sample_adcrm_seeded(&omega, 3);
        let g = adcrm_to_sfcrm(&h, &cfg).unwrap();

        let v = centered_dft_matrix::<f64>(4).unwrap();
        let f = crate::transforms::dft_matrix::<f64>(8).unwrap();
        let f_tall = f.slice(s![.., ..3]).to_owned();
        let expect = v.dot(h.values()).dot(&f_tall.t().to_owned());
        let err: f64 = g
            .values()
            .iter()
            .zip(expect.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);

        // unitarity: energy preserved, round trip exact
        let back = sfcrm_to_adcrm(&g, &cfg).unwrap();
        let rt: f64 = back
            .values()
            .iter()
            .zip(h.values().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(rt < 1e-12, "round trip error {rt}");
        let eh = h.energy();
        let eg: f64 = g.values().iter().map(|z| z.norm_sqr()).sum();
        assert!((eh - eg).abs() < 1e-9 * eh);
    }

    #[test]
    fn vectorized_transform_is_kronecker_product() {
        // vec(H) = (F (x) V)^H vec(G), checked against an explicit Kronecker
        let cfg = test_cfg(4, 8, 3);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        let h = sample_adcrm_seeded(&omega, 11);
        let g = adcrm_to_sfcrm(&h, &cfg).unwrap();

        let v = centered_dft_matrix::<f64>(4).unwrap();
        let f = crate::transforms::dft_matrix::<f64>(8).unwrap();
        let f_tall = f.slice(s![.., ..3]).to_owned();
        // kron(F, V): (8*4) x (3*4), index (n*4+m, q*4+p) = F[n,q] V[m,p]
        let mut kron = Array2::<Complex64>::zeros((32, 12));
        for n in 0..8 {
            for q in 0..3 {
                for m in 0..4 {
                    for p in 0..4 {
                        kron[[n * 4 + m, q * 4 + p]] = f_tall[[n, q]] * v[[m, p]];
                    }
                }
            }
        }
        // vec by columns
        let vec_g: Vec<Complex64> = (0..8)
            .flat_map(|n| (0..4).map(move |m| (m, n)))
            .map(|(m, n)| g.values()[[m, n]])
            .collect();
        let mut vec_h = vec![Complex64::new(0.0, 0.0); 12];
        for col in 0..12 {
            for row in 0..32 {
                vec_h[col] += kron[[row, col]].conj() * vec_g[row];
            }
        }
        for q in 0..3 {
            for p in 0..4 {
                let expect = vec_h[q * 4 + p];
                let got = h.values()[[p, q]];
                assert!((expect - got).norm() < 1e-10, "({p},{q})");
            }
        }
    }

    #[test]
    fn shifted_power_matrix_hand_case() {
        // M = 2, Nc = 6, Ng = 3; Omega columns [c0 c1 c2]
        let cfg = test_cfg(2, 6, 3);
        let omega = Adcpm::from_values(ndarray::arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])).unwrap();
        // shift 0: unchanged
        assert_eq!(
            shifted_power_matrix(&omega, 0, &cfg).unwrap(),
            omega.values().clone()
        );
        // shift 2: columns of the extension [c0 c1 c2 0 0 0] moved right by 2,
        // truncated to 3 -> [0 0 c0]
        let s2 = shifted_power_matrix(&omega, 2, &cfg).unwrap();
        assert_eq!(s2, ndarray::arr2(&[[0.0, 0.0, 1.0], [0.0, 0.0, 4.0]]));
        // shift -1 wraps column 1 out and pulls nothing in from the zero pad
        let sm1 = shifted_power_matrix(&omega, -1, &cfg).unwrap();
        assert_eq!(sm1, ndarray::arr2(&[[2.0, 3.0, 0.0], [5.0, 6.0, 0.0]]));
        // shift Nc is the identity again
        assert_eq!(
            shifted_power_matrix(&omega, 6, &cfg).unwrap(),
            omega.values().clone()
        );
        // total power is conserved when the support stays inside the window
        let s1 = shifted_power_matrix(&omega, 1, &cfg).unwrap();
        assert_eq!(s1.sum(), 1.0 + 4.0 + 2.0 + 5.0);
    }

    #[test]
    fn extended_shift_agrees_with_truncation() {
        let cfg = test_cfg(4, 12, 5);
        let omega = build_adcpm(&two_tap_profile(), &cfg).unwrap();
        for shift in [-3i64, 0, 2, 7, 11, 13] {
            let ext = extended_shifted_adcpm(&omega, shift, 12);
            let tr = shifted_power_matrix(&omega, shift, &cfg).unwrap();
            assert_eq!(ext.slice(s![.., ..5]).to_owned(), tr, "shift {shift}");
            // shifting never creates or destroys power in the extended window
            assert!((ext.sum() - omega.total()).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_covariance_is_hermitian_psd_with_consistent_trace() {
        let cfg = test_cfg(8, 16, 4);
        let profile = two_tap_profile();
        let r = build_sfccm_small(&profile, &cfg, 8 * 8).unwrap();
        let dim = 8 * 16;
        assert_eq!(r.dim(), (dim, dim));
        // hermitian
        let mut herm_err = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                herm_err = herm_err.max((r[[i, j]] - r[[j, i]].conj()).norm());
            }
        }
        let max_abs = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(herm_err <= 1e-12 * max_abs, "hermitian error {herm_err}");
        // trace equals M*Nc times the quadrature mass of the spectrum (which
        // integrates to ~1)
        let trace: f64 = (0..dim).map(|i| r[[i, i]].re).sum();
        let expect = (8 * 16) as f64;
        assert!(
            (trace - expect).abs() < 0.02 * expect,
            "trace {trace} vs {expect}"
        );
        // numerically PSD on random probes
        let mut rng = derive_rng(4, &[tags::INSTANCE]);
        for _ in 0..25 {
            let z: Vec<Complex64> = (0..dim)
                .map(|_| {
                    Complex64::new(
                        <f64 as Scalar>::standard_normal(&mut rng),
                        <f64 as Scalar>::standard_normal(&mut rng),
                    )
                })
                .collect();
            let mut quad = Complex64::new(0.0, 0.0);
            for i in 0..dim {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..dim {
                    row += r[[i, j]] * z[j];
                }
                quad += z[i].conj() * row;
            }
            assert!(quad.re > -1e-8 * max_abs * dim as f64, "probe form {quad}");
            assert!(quad.im.abs() < 1e-8 * quad.re.abs().max(1.0));
        }
    }

    #[test]
    fn dense_covariance_rejects_large_instances() {
        let cfg = test_cfg(64, 128, 16);
        assert!(matches!(
            build_sfccm_small(&two_tap_profile(), &cfg, 64),
            Err(ApspError::InstanceTooLarge(_))
        ));
        let omega = Adcpm::from_values(Array2::zeros((64, 16))).unwrap();
        assert!(matches!(
            sfccm_from_adcpm(&omega, &cfg),
            Err(ApspError::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn separable_covariance_converges_to_quadrature() {
        // the gap between the dense quadrature covariance and the separable
        // approximation shrinks as the array grows
        let profile = two_tap_profile();
        let mut errs = Vec::new();
        for m in [4usize, 8, 16] {
            let cfg = test_cfg(m, 8, 3);
            let r = build_sfccm_small(&profile, &cfg, 8 * m.max(16)).unwrap();
            let omega = build_adcpm(&profile, &cfg).unwrap();
            let approx = sfccm_from_adcpm(&omega, &cfg).unwrap();
            let num: f64 = r
                .iter()
                .zip(approx.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let den: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            errs.push((num / den).sqrt());
        }
        assert!(
            errs[2] < errs[1] && errs[1] < errs[0],
            "relative errors {errs:?}"
        );
    }
}
