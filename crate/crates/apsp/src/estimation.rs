//! Received-signal synthesis, decorrelation, element-wise MMSE estimation
//! and the closed-form MSE expressions.
//!
//! During the pilot segment the BS receives, per symbol `s`,
//! `Y_s = sum_k G_k diag(x_{k,s}) + Z_s` with `G_k = V_M H_k F^T` and i.i.d.
//! noise of power `sigma_ztr`. Correlating with UT `k`'s pilot and moving to
//! the angle-delay domain,
//!
//! ```text
//! Y_k = (1 / (sigma_xtr Q)) V^H (sum_s Y_s diag(conj x_{k,s})) F*
//!     = H_k + sum_{k' in group(k)} Hext_{k'} P^{d(k',k)} I_{Nc x Ng} + N_k,
//! ```
//!
//! where `Hext` is the `M x Nc` zero-padded response, `P^d` the cyclic
//! column shift by the single-symbol shift difference `d(k',k)` and `N_k`
//! white with per-entry variance `1 / (rho_tr Q)`. Because all terms have
//! independent entries, the MMSE estimate is element-wise:
//!
//! ```text
//! Hhat[i,j] = Omega_k[i,j] / den_k[i,j] * Y_k[i,j],
//! den_k = sum_{k' in group} shifted(Omega_{k'}) + 1 / (rho_tr Q),
//! ```
//!
//! with estimation error `eps_k = sum_ij (Omega - Omega^2 / den)`, lower
//! bounded by the interference-free `den = Omega + 1/(rho_tr Q)`. A stale
//! estimate used at lag `dl` costs `sum_ij Omega + (1 - 2 rho(dl)) Omega^2 /
//! den`; rescaling the estimate by `rho(dl)` (channel prediction) costs
//! `sum_ij Omega - rho(dl)^2 Omega^2 / den`, which never does worse.

use crate::channel::{
    build_adcpm, evolve_adcrm, sample_adcrm, shifted_power_matrix, tcf, Adcpm, Adcrm,
    SystemConfig, UtProfile,
};
use crate::error::{ApspError, Result};
use crate::pilots::{make_basic_pilot, BasicPilot, BasicPilotKind, PilotSchedule};
use crate::rng::{derive_rng, tags};
use crate::scalar::{fl, Scalar};
use crate::transforms::{centered_transform_adjoint, dft_right_reduce, ComplexMatrix};
use ndarray::{Array2, Zip};
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

/// Decorrelated per-UT observation in the angle-delay domain (`M x Ng`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix<T: Scalar> {
    ut: usize,
    q: usize,
    values: ComplexMatrix<T>,
}

impl<T: Scalar> ObservationMatrix<T> {
    pub fn ut(&self) -> usize {
        self.ut
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn values(&self) -> &ComplexMatrix<T> {
        &self.values
    }
}

/// Which acquisition error a report measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseKind {
    /// Estimation error at the pilot symbol.
    Ce,
    /// Error of the unmodified (stale) estimate used `delta_ell` symbols away.
    CeWithDelay,
    /// Error of the predicted (TCF-rescaled) estimate at lag `delta_ell`.
    Cp,
}

impl MseKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ce => "ce",
            Self::CeWithDelay => "ce-delay",
            Self::Cp => "cp",
        }
    }
}

/// Sum-MSE evaluation: per-UT raw sums, their total and the matching
/// interference-free lower bound. Totals are raw (not divided by `Nc K`);
/// use [`normalized`](Self::normalized) for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct MseReport<T: Scalar> {
    pub kind: MseKind,
    pub delta_ell: i64,
    pub per_ut: Vec<T>,
    pub total: T,
    pub bound_total: T,
}

impl<T: Scalar> MseReport<T> {
    fn new(kind: MseKind, delta_ell: i64, per_ut: Vec<T>, bound_total: T) -> Self {
        let total = per_ut.iter().copied().fold(T::zero(), |a, b| a + b);
        Self {
            kind,
            delta_ell,
            per_ut,
            total,
            bound_total,
        }
    }

    /// Totals divided by `Nc K`.
    pub fn normalized(&self, cfg: &SystemConfig<T>) -> (T, T) {
        let scale = fl::<T>((cfg.nc() * self.per_ut.len()) as f64);
        (self.total / scale, self.bound_total / scale)
    }
}

fn check_schedule<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Result<()> {
    if schedule.nc() != cfg.nc() {
        return Err(ApspError::DimensionMismatch(format!(
            "schedule nc = {} vs config nc = {}",
            schedule.nc(),
            cfg.nc()
        )));
    }
    if schedule.k() != adcpms.len() {
        return Err(ApspError::DimensionMismatch(format!(
            "schedule has {} UTs, got {} power matrices",
            schedule.k(),
            adcpms.len()
        )));
    }
    for (ut, omega) in adcpms.iter().enumerate() {
        if omega.m() != cfg.m() || omega.ng() != cfg.ng() {
            return Err(ApspError::DimensionMismatch(format!(
                "power matrix of ut {ut} is {}x{}, config wants {}x{}",
                omega.m(),
                omega.ng(),
                cfg.m(),
                cfg.ng()
            )));
        }
    }
    Ok(())
}

/// Received pilot-segment signal `M x (Nc Q)`: symbol `s` occupies columns
/// `s Nc .. (s+1) Nc`.
pub fn synthesize_received<T: Scalar, R: Rng + ?Sized>(
    channels: &[Adcrm<T>],
    schedule: &PilotSchedule<T>,
    basic: &BasicPilot<T>,
    cfg: &SystemConfig<T>,
    rng: &mut R,
) -> Result<ComplexMatrix<T>> {
    if channels.len() != schedule.k() {
        return Err(ApspError::DimensionMismatch(format!(
            "{} channels for a schedule of {} UTs",
            channels.len(),
            schedule.k()
        )));
    }
    let (m, nc, q) = (cfg.m(), cfg.nc(), schedule.q());
    let mut y: ComplexMatrix<T> = Array2::zeros((m, nc * q));
    for (ut, h) in channels.iter().enumerate() {
        let g = crate::channel::adcrm_to_sfcrm(h, cfg)?;
        let pilot = schedule.build_pilot(ut, basic, cfg.sigma_xtr())?;
        for s in 0..q {
            let x = pilot.symbol(s);
            for i in 0..m {
                for n in 0..nc {
                    y[[i, s * nc + n]] = y[[i, s * nc + n]] + g.values()[[i, n]] * x[n];
                }
            }
        }
    }
    let noise = (cfg.sigma_ztr() * fl::<T>(0.5)).sqrt();
    y.mapv_inplace(|v| {
        v + Complex::new(
            noise * T::standard_normal(rng),
            noise * T::standard_normal(rng),
        )
    });
    Ok(y)
}

/// Seeded wrapper around [`synthesize_received`] (noise stream only).
pub fn synthesize_received_seeded<T: Scalar>(
    channels: &[Adcrm<T>],
    schedule: &PilotSchedule<T>,
    basic: &BasicPilot<T>,
    cfg: &SystemConfig<T>,
    seed: u64,
) -> Result<ComplexMatrix<T>> {
    let mut rng = derive_rng(seed, &[tags::NOISE]);
    synthesize_received(channels, schedule, basic, cfg, &mut rng)
}

/// Correlate the received segment with UT `ut`'s pilot, normalize by
/// `sigma_xtr Q` and transform to the angle-delay domain.
pub fn decorrelate_observation<T: Scalar>(
    y: &ComplexMatrix<T>,
    ut: usize,
    schedule: &PilotSchedule<T>,
    basic: &BasicPilot<T>,
    cfg: &SystemConfig<T>,
) -> Result<ObservationMatrix<T>> {
    if ut >= schedule.k() {
        return Err(ApspError::OutOfRange(format!(
            "ut {ut} outside schedule with k = {}",
            schedule.k()
        )));
    }
    let (m, nc, q) = (cfg.m(), cfg.nc(), schedule.q());
    if y.dim() != (m, nc * q) {
        return Err(ApspError::DimensionMismatch(format!(
            "received block is {:?}, want ({m}, {})",
            y.dim(),
            nc * q
        )));
    }
    let pilot = schedule.build_pilot(ut, basic, cfg.sigma_xtr())?;
    let norm = T::one() / (cfg.sigma_xtr() * fl::<T>(q as f64));
    let mut acc: ComplexMatrix<T> = Array2::zeros((m, nc));
    for s in 0..q {
        let x = pilot.symbol(s);
        for i in 0..m {
            for n in 0..nc {
                acc[[i, n]] = acc[[i, n]] + y[[i, s * nc + n]] * x[n].conj();
            }
        }
    }
    acc.mapv_inplace(|v| v.scale(norm));
    let narrow = dft_right_reduce(&acc, cfg.ng());
    Ok(ObservationMatrix {
        ut,
        q,
        values: centered_transform_adjoint(&narrow),
    })
}

/// Per-element MMSE denominator of UT `ut`: same-group shifted power
/// matrices summed, plus the effective noise floor `1 / (rho_tr Q)`.
pub fn interference_denominator<T: Scalar>(
    ut: usize,
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Result<Array2<T>> {
    check_schedule(schedule, adcpms, cfg)?;
    if ut >= schedule.k() {
        return Err(ApspError::OutOfRange(format!(
            "ut {ut} outside schedule with k = {}",
            schedule.k()
        )));
    }
    let noise = T::one() / (cfg.rho_tr() * fl::<T>(schedule.q() as f64));
    let mut den = Array2::from_elem((cfg.m(), cfg.ng()), noise);
    for other in 0..schedule.k() {
        if schedule.group(other) != schedule.group(ut) {
            continue;
        }
        let shift = schedule.base_shift(other) as i64 - schedule.base_shift(ut) as i64;
        let contrib = shifted_power_matrix(&adcpms[other], shift, cfg)?;
        den.zip_mut_with(&contrib, |a, b| *a = *a + *b);
    }
    Ok(den)
}

/// Element-wise MMSE filter with a precomputed denominator.
pub fn mmse_estimate_with_denominator<T: Scalar>(
    obs: &ObservationMatrix<T>,
    omega: &Adcpm<T>,
    den: &Array2<T>,
) -> Result<Adcrm<T>> {
    if obs.values.dim() != omega.values().dim() || obs.values.dim() != den.dim() {
        return Err(ApspError::DimensionMismatch(format!(
            "observation {:?}, power {:?}, denominator {:?}",
            obs.values.dim(),
            omega.values().dim(),
            den.dim()
        )));
    }
    let values = Zip::from(&obs.values)
        .and(omega.values())
        .and(den)
        .map_collect(|y, &w, &d| y.scale(w / d));
    Ok(Adcrm::from_values(values))
}

/// Element-wise MMSE estimate of UT `obs.ut()`'s ADCRM.
pub fn mmse_estimate<T: Scalar>(
    obs: &ObservationMatrix<T>,
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Result<Adcrm<T>> {
    let den = interference_denominator(obs.ut, schedule, adcpms, cfg)?;
    mmse_estimate_with_denominator(obs, &adcpms[obs.ut], &den)
}

/// Predict the channel `delta_ell` symbols from the estimate: scale by the
/// temporal correlation `rho(delta_ell)`.
pub fn predict<T: Scalar>(
    estimate: &Adcrm<T>,
    profile: &UtProfile<T>,
    delta_ell: i64,
    cfg: &SystemConfig<T>,
) -> Result<Adcrm<T>> {
    let rho = tcf(profile.doppler_nu, cfg.tsym(), delta_ell)?;
    Ok(Adcrm::from_values(estimate.values().mapv(|v| v.scale(rho))))
}

fn per_ut_tcf<T: Scalar>(
    profiles: &[UtProfile<T>],
    delta_ell: i64,
    cfg: &SystemConfig<T>,
) -> Result<Vec<T>> {
    profiles
        .iter()
        .map(|p| tcf(p.doppler_nu, cfg.tsym(), delta_ell))
        .collect()
}

/// Shared evaluator: per-UT `sum_ij Omega + c1 * Omega^2 / den` and the
/// interference-free version with `den = Omega + noise`.
fn mse_sums<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
    coeff: impl Fn(usize) -> T,
) -> Result<(Vec<T>, T)> {
    check_schedule(schedule, adcpms, cfg)?;
    let noise = T::one() / (cfg.rho_tr() * fl::<T>(schedule.q() as f64));
    let mut per_ut = Vec::with_capacity(schedule.k());
    let mut bound = T::zero();
    for ut in 0..schedule.k() {
        let c = coeff(ut);
        let den = interference_denominator(ut, schedule, adcpms, cfg)?;
        let mut sum = T::zero();
        let mut sum_bound = T::zero();
        for (&w, &d) in adcpms[ut].values().iter().zip(den.iter()) {
            sum = sum + w + c * w * w / d;
            sum_bound = sum_bound + w + c * w * w / (w + noise);
        }
        per_ut.push(sum);
        bound = bound + sum_bound;
    }
    Ok((per_ut, bound))
}

/// Closed-form sum MSE of channel estimation at the pilot symbol, with the
/// interference-free lower bound.
pub fn analytic_mse_ce<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Result<MseReport<T>> {
    let (per_ut, bound) = mse_sums(schedule, adcpms, cfg, |_| -T::one())?;
    Ok(MseReport::new(MseKind::Ce, 0, per_ut, bound))
}

/// Closed-form sum MSE of using the stale estimate `delta_ell` symbols away
/// without prediction. The attached bound is the channel-prediction bound at
/// the same lag (the best acquisition error achievable at that lag), which
/// this quantity always dominates.
pub fn analytic_mse_ce_with_delay<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    profiles: &[UtProfile<T>],
    delta_ell: i64,
    cfg: &SystemConfig<T>,
) -> Result<MseReport<T>> {
    if profiles.len() != schedule.k() {
        return Err(ApspError::DimensionMismatch(format!(
            "{} profiles for {} UTs",
            profiles.len(),
            schedule.k()
        )));
    }
    let rho = per_ut_tcf(profiles, delta_ell, cfg)?;
    let (per_ut, _) = mse_sums(schedule, adcpms, cfg, |ut| {
        T::one() - fl::<T>(2.0) * rho[ut]
    })?;
    let (_, cp_bound) = mse_sums(schedule, adcpms, cfg, |ut| -(rho[ut] * rho[ut]))?;
    Ok(MseReport::new(
        MseKind::CeWithDelay,
        delta_ell,
        per_ut,
        cp_bound,
    ))
}

/// Closed-form sum MSE of channel prediction at lag `delta_ell`, with its
/// interference-free lower bound.
pub fn analytic_mse_cp<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    profiles: &[UtProfile<T>],
    delta_ell: i64,
    cfg: &SystemConfig<T>,
) -> Result<MseReport<T>> {
    if profiles.len() != schedule.k() {
        return Err(ApspError::DimensionMismatch(format!(
            "{} profiles for {} UTs",
            profiles.len(),
            schedule.k()
        )));
    }
    let rho = per_ut_tcf(profiles, delta_ell, cfg)?;
    let (per_ut, bound) = mse_sums(schedule, adcpms, cfg, |ut| -(rho[ut] * rho[ut]))?;
    Ok(MseReport::new(MseKind::Cp, delta_ell, per_ut, bound))
}

/// Monte Carlo counterpart of the analytic sums, plus the standard error of
/// the total. Channels/noise/evolution use derived per-(trial, UT) streams,
/// so results do not depend on evaluation order or worker count.
pub fn empirical_mse_with_stderr<T: Scalar>(
    kind: MseKind,
    delta_ell: i64,
    trials: usize,
    schedule: &PilotSchedule<T>,
    profiles: &[UtProfile<T>],
    cfg: &SystemConfig<T>,
    seed: u64,
) -> Result<(MseReport<T>, T)> {
    if trials == 0 {
        return Err(ApspError::InvalidArgument("trials = 0".into()));
    }
    if profiles.len() != schedule.k() {
        return Err(ApspError::DimensionMismatch(format!(
            "{} profiles for {} UTs",
            profiles.len(),
            schedule.k()
        )));
    }
    let adcpms: Vec<Adcpm<T>> = profiles
        .iter()
        .map(|p| build_adcpm(p, cfg))
        .collect::<Result<_>>()?;
    check_schedule(schedule, &adcpms, cfg)?;
    let basic = make_basic_pilot::<T>(cfg.nc(), BasicPilotKind::RootSequence { root: 1 })?;
    let k = schedule.k();
    let dens: Vec<Array2<T>> = (0..k)
        .map(|ut| interference_denominator(ut, schedule, &adcpms, cfg))
        .collect::<Result<_>>()?;
    let rho: Vec<T> = match kind {
        MseKind::Ce => vec![T::one(); k],
        _ => per_ut_tcf(profiles, delta_ell, cfg)?,
    };

    let per_trial: Vec<Vec<T>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<T>> {
            let mut channels = Vec::with_capacity(k);
            for ut in 0..k {
                let mut rng = derive_rng(seed, &[tags::CHANNEL, t as u64, ut as u64]);
                channels.push(sample_adcrm(&adcpms[ut], &mut rng));
            }
            let mut noise_rng = derive_rng(seed, &[tags::NOISE, t as u64]);
            let y = synthesize_received(&channels, schedule, &basic, cfg, &mut noise_rng)?;
            let mut errs = Vec::with_capacity(k);
            for ut in 0..k {
                let obs = decorrelate_observation(&y, ut, schedule, &basic, cfg)?;
                let est = mmse_estimate_with_denominator(&obs, &adcpms[ut], &dens[ut])?;
                let target = match kind {
                    MseKind::Ce => channels[ut].clone(),
                    _ => {
                        let mut rng = derive_rng(seed, &[tags::EVOLVE, t as u64, ut as u64]);
                        evolve_adcrm(&channels[ut], &adcpms[ut], rho[ut], &mut rng)?
                    }
                };
                let scale = match kind {
                    MseKind::Cp => rho[ut],
                    _ => T::one(),
                };
                let err = target
                    .values()
                    .iter()
                    .zip(est.values().iter())
                    .map(|(h, e)| (*h - e.scale(scale)).norm_sqr())
                    .fold(T::zero(), |a, b| a + b);
                errs.push(err);
            }
            Ok(errs)
        })
        .collect::<Result<_>>()?;

    let inv = T::one() / fl::<T>(trials as f64);
    let mut per_ut = vec![T::zero(); k];
    let mut mean_total = T::zero();
    let mut sq_total = T::zero();
    for errs in &per_trial {
        let mut total = T::zero();
        for (acc, &e) in per_ut.iter_mut().zip(errs.iter()) {
            *acc = *acc + e * inv;
            total = total + e;
        }
        mean_total = mean_total + total * inv;
        sq_total = sq_total + total * total * inv;
    }
    let var = (sq_total - mean_total * mean_total).max(T::zero());
    let stderr = (var / fl::<T>(trials as f64)).sqrt();

    let bound = match kind {
        MseKind::Ce => analytic_mse_ce(schedule, &adcpms, cfg)?.bound_total,
        MseKind::CeWithDelay => {
            analytic_mse_ce_with_delay(schedule, &adcpms, profiles, delta_ell, cfg)?.bound_total
        }
        MseKind::Cp => analytic_mse_cp(schedule, &adcpms, profiles, delta_ell, cfg)?.bound_total,
    };
    Ok((MseReport::new(kind, delta_ell, per_ut, bound), stderr))
}

/// Monte Carlo sum MSE (see [`empirical_mse_with_stderr`]).
pub fn empirical_mse<T: Scalar>(
    kind: MseKind,
    delta_ell: i64,
    trials: usize,
    schedule: &PilotSchedule<T>,
    profiles: &[UtProfile<T>],
    cfg: &SystemConfig<T>,
    seed: u64,
) -> Result<MseReport<T>> {
    empirical_mse_with_stderr(kind, delta_ell, trials, schedule, profiles, cfg, seed)
        .map(|(report, _)| report)
}
