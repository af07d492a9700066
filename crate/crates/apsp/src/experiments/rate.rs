//! Simplified achievable-rate evaluation of a pilot/data frame.
//!
//! Every data symbol at lag `delta_ell` from the pilot segment is scored
//! with predicted channels: the base station rescales each UT's estimate by
//! its temporal correlation `rho(delta_ell)` and treats the residual error
//! as extra white noise (the classical worst-case treatment). With the
//! prediction error sums `eps_k` at that lag, the per-antenna effective
//! noise on the uplink is
//!
//! ```text
//! sigma_v = sigma_z + sigma_x * sum_k eps_k / (M Nc),
//! ```
//!
//! and the uplink MMSE receiver on the predicted per-subcarrier channel
//! matrix `A = [a_1 .. a_K]` gives
//!
//! ```text
//! SINR_k = 1 / [ (I + (sigma_x / sigma_v) A^H A)^{-1} ]_{kk} - 1 .
//! ```
//!
//! The downlink reuses the predicted channels reciprocally with a regularized
//! MMSE precoder `P = A (A^H A + alpha I)^{-1}`, `alpha = K sigma_v /
//! sigma_x`, rescaled to total power `K` per subcarrier; UT `k` sees its own
//! estimation error as noise `sigma_z + sigma_x K eps_k / (M Nc)`. This
//! downlink model is an approximation and rows are labeled accordingly.
//!
//! Sum rates `sum_k log2(1 + SINR_k)` are averaged over trials, evaluated
//! subcarriers and the data symbols of each half of the frame, then scaled
//! by that half's share of the frame and by the guard-interval overhead
//! `Nc / (Nc + Ng)`. Data symbols reuse the training SNR.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex;
use rayon::prelude::*;

use crate::channel::{adcrm_to_sfcrm, build_adcpm, sample_adcrm, tcf, Adcpm, SystemConfig};
use crate::error::{ApspError, Result};
use crate::estimation::{
    decorrelate_observation, interference_denominator, mmse_estimate_with_denominator,
    synthesize_received, MseKind,
};
use crate::pilots::{make_basic_pilot, BasicPilot, BasicPilotKind};
use crate::rng::{derive_rng, tags};
use crate::scalar::{fl, Scalar};
use crate::transforms::ComplexMatrix;

use super::{
    frame_layout, point_report, segment_plans, ExperimentSpec, FrameKind, RowSource, Scheme,
    SegmentPlan,
};

/// Largest `M * K` the per-subcarrier matrix work accepts.
const DENSE_RATE_LIMIT: usize = 4096;

/// Average spectral efficiency of one SNR point, split into the uplink and
/// downlink halves of the frame. Both values already include the pilot and
/// guard-interval overhead, so `total_se` is the frame's average spectral
/// efficiency in bits/s/Hz.
#[derive(Debug, Clone)]
pub struct RateRow<T: Scalar> {
    pub scenario: String,
    pub scheme: Scheme,
    pub frame: FrameKind,
    pub q: usize,
    pub snr_db: f64,
    pub ul_se: T,
    pub dl_se: T,
    pub total_se: T,
}

/// Rate rows for every requested SNR.
#[derive(Debug, Clone)]
pub struct RateReport<T: Scalar> {
    pub rows: Vec<RateRow<T>>,
}

/// Solve `A X = B` by LU decomposition with partial pivoting, overwriting
/// `B` with the solution.
fn lu_solve<T: Scalar>(a: &mut ComplexMatrix<T>, b: &mut ComplexMatrix<T>) -> Result<()> {
    let n = a.nrows();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[[col, col]].norm_sqr();
        for r in col + 1..n {
            let v = a[[r, col]].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= T::zero() {
            return Err(ApspError::Domain("singular matrix in MMSE solve".into()));
        }
        if piv != col {
            for c in 0..n {
                a.swap([col, c], [piv, c]);
            }
            for c in 0..b.ncols() {
                b.swap([col, c], [piv, c]);
            }
        }
        let d = a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / d;
            a[[r, col]] = f;
            for c in col + 1..n {
                let v = a[[col, c]];
                a[[r, c]] = a[[r, c]] - f * v;
            }
            for c in 0..b.ncols() {
                let v = b[[col, c]];
                b[[r, c]] = b[[r, c]] - f * v;
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..b.ncols() {
            let mut v = b[[col, c]];
            for j in col + 1..n {
                v = v - a[[col, j]] * b[[j, c]];
            }
            b[[col, c]] = v / a[[col, col]];
        }
    }
    Ok(())
}

fn identity<T: Scalar>(n: usize) -> ComplexMatrix<T> {
    let mut eye: ComplexMatrix<T> = Array2::zeros((n, n));
    for i in 0..n {
        eye[[i, i]] = Complex::new(T::one(), T::zero());
    }
    eye
}

/// Hermitian Gram matrix of the evaluated subcarrier: `C[i, j] = a_i^H a_j`
/// over the raw (unpredicted) estimated columns.
fn column_gram<T: Scalar>(est_sf: &[ComplexMatrix<T>], n: usize) -> ComplexMatrix<T> {
    let k = est_sf.len();
    let m = est_sf[0].nrows();
    let mut gram: ComplexMatrix<T> = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let mut s = Complex::new(T::zero(), T::zero());
            for r in 0..m {
                s = s + est_sf[i][[r, n]].conj() * est_sf[j][[r, n]];
            }
            gram[[i, j]] = s;
            if i != j {
                gram[[j, i]] = s.conj();
            }
        }
    }
    gram
}

/// Prediction data of one evaluated lag.
struct LagData<T: Scalar> {
    /// Per-UT temporal correlation at the lag.
    rho: Vec<T>,
    /// Per-UT prediction error sums (raw, over all `M Ng` elements).
    eps: Vec<T>,
    /// Uplink effective noise per antenna.
    sigma_v: T,
}

fn scaled_gram<T: Scalar>(gram: &ComplexMatrix<T>, rho: &[T]) -> ComplexMatrix<T> {
    let k = rho.len();
    let mut g = gram.clone();
    for i in 0..k {
        for j in 0..k {
            g[[i, j]] = g[[i, j]].scale(rho[i] * rho[j]);
        }
    }
    g
}

/// Uplink sum rate of one subcarrier from the predicted Gram matrix.
fn ul_sum_rate<T: Scalar>(g: &ComplexMatrix<T>, sigma_v: T, cfg: &SystemConfig<T>) -> Result<T> {
    let k = g.nrows();
    let c = cfg.sigma_xtr() / sigma_v;
    let mut b = identity::<T>(k);
    for i in 0..k {
        for j in 0..k {
            b[[i, j]] = b[[i, j]] + g[[i, j]].scale(c);
        }
    }
    let mut x = identity::<T>(k);
    lu_solve(&mut b, &mut x)?;
    let mut sum = T::zero();
    for i in 0..k {
        let d = x[[i, i]].re.min(T::one());
        if d > T::zero() {
            sum = sum - d.log2();
        }
    }
    Ok(sum)
}

/// Downlink sum rate of one subcarrier with the regularized precoder.
fn dl_sum_rate<T: Scalar>(
    g: &ComplexMatrix<T>,
    data: &LagData<T>,
    cfg: &SystemConfig<T>,
) -> Result<T> {
    let k = g.nrows();
    let sigma_x = cfg.sigma_xtr();
    let sigma_z = cfg.sigma_ztr();
    let alpha = fl::<T>(k as f64) * data.sigma_v / sigma_x;
    let mut d = g.clone();
    for i in 0..k {
        d[[i, i]] = d[[i, i]] + Complex::new(alpha, T::zero());
    }
    let mut x = identity::<T>(k);
    lu_solve(&mut d, &mut x)?;
    let w = g.dot(&x);
    // ||A X||_F^2 = sum_ij conj(X) .* (G X), the precoder power before
    // normalization to total power K.
    let mut pnorm = T::zero();
    for (xv, wv) in x.iter().zip(w.iter()) {
        pnorm = pnorm + (xv.conj() * wv).re;
    }
    if pnorm <= T::zero() {
        return Ok(T::zero());
    }
    let s2 = fl::<T>(k as f64) / pnorm;
    let per_entry = fl::<T>((cfg.m() * cfg.nc()) as f64);
    let mut sum = T::zero();
    for i in 0..k {
        let sig = w[[i, i]].norm_sqr();
        let mut interf = T::zero();
        for j in 0..k {
            if j != i {
                interf = interf + w[[i, j]].norm_sqr();
            }
        }
        let noise = sigma_z + sigma_x * fl::<T>(k as f64) * data.eps[i] / per_entry;
        let sinr = sigma_x * s2 * sig / (sigma_x * s2 * interf + noise);
        sum = sum + (T::one() + sinr).log2();
    }
    Ok(sum)
}

/// Estimate every UT's space-frequency channel from one synthesized pilot
/// segment per plan, using the plan's derived seed and trial index.
fn trial_estimates<T: Scalar>(
    t: usize,
    plans: &[SegmentPlan<T>],
    dens: &[Vec<Array2<T>>],
    adcpms: &[Adcpm<T>],
    basic: &BasicPilot<T>,
) -> Result<Vec<ComplexMatrix<T>>> {
    let mut est_sf = Vec::with_capacity(adcpms.len());
    for (plan, plan_dens) in plans.iter().zip(dens) {
        let kk = plan.schedule.k();
        let mut channels = Vec::with_capacity(kk);
        for i in 0..kk {
            let mut rng = derive_rng(plan.seed, &[tags::CHANNEL, t as u64, i as u64]);
            channels.push(sample_adcrm(&adcpms[plan.first_ut + i], &mut rng));
        }
        let mut noise_rng = derive_rng(plan.seed, &[tags::NOISE, t as u64]);
        let y = synthesize_received(&channels, &plan.schedule, basic, &plan.cfg, &mut noise_rng)?;
        for i in 0..kk {
            let obs = decorrelate_observation(&y, i, &plan.schedule, basic, &plan.cfg)?;
            let est = mmse_estimate_with_denominator(&obs, &adcpms[plan.first_ut + i], &plan_dens[i])?;
            est_sf.push(adcrm_to_sfcrm(&est, &plan.cfg)?.values().clone());
        }
    }
    Ok(est_sf)
}

/// Average spectral efficiency of the spec's frame at each SNR.
///
/// Guarded to `M K <= 4096`: the evaluation inverts a `K x K` matrix per
/// evaluated subcarrier and lag, which is meant for the reduced geometry.
pub fn evaluate_spectral_efficiency<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<RateReport<T>> {
    spec.validate()?;
    let (m, k) = (spec.cfg.m(), spec.cfg.k());
    if m * k > DENSE_RATE_LIMIT {
        return Err(ApspError::InstanceTooLarge(format!(
            "per-subcarrier MMSE work needs M K <= {DENSE_RATE_LIMIT}, got {m} x {k} = {}; \
             use a reduced geometry or fewer UTs",
            m * k
        )));
    }
    let profiles = spec.profiles()?;
    let adcpms: Vec<Adcpm<T>> = profiles
        .iter()
        .map(|p| build_adcpm(p, &spec.cfg))
        .collect::<Result<_>>()?;
    let layout = frame_layout(spec.frame, spec.frame_len, spec.q)?;
    let subcarriers: Vec<usize> = (0..spec.cfg.nc()).step_by(spec.subcarrier_step).collect();
    let basic = make_basic_pilot::<T>(spec.cfg.nc(), BasicPilotKind::RootSequence { root: 1 })?;

    let mut rows = Vec::with_capacity(spec.snr_db.len());
    for &snr in &spec.snr_db {
        let cfg = spec
            .cfg
            .clone()
            .with_rho_tr(fl::<T>(10f64.powf(snr / 10.0)))?;
        let plans = segment_plans(spec.scheme, spec.q, spec.gamma, spec.seed, &adcpms, &cfg)?;
        let dens: Vec<Vec<Array2<T>>> = plans
            .iter()
            .map(|plan| {
                (0..plan.schedule.k())
                    .map(|i| {
                        interference_denominator(
                            i,
                            &plan.schedule,
                            &adcpms[plan.members()],
                            &plan.cfg,
                        )
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;

        let mut lag_map: BTreeMap<i64, LagData<T>> = BTreeMap::new();
        for lag in layout.all() {
            let key = lag.abs();
            if lag_map.contains_key(&key) {
                continue;
            }
            let rho = profiles
                .iter()
                .map(|p| tcf(p.doppler_nu, cfg.tsym(), key))
                .collect::<Result<Vec<T>>>()?;
            let (report, _) = point_report(
                &plans,
                RowSource::Analytic,
                MseKind::Cp,
                key,
                spec.trials,
                &adcpms,
                &profiles,
            )?;
            let eps_total = report.total;
            let sigma_v = cfg.sigma_ztr()
                + cfg.sigma_xtr() * eps_total / fl::<T>((cfg.m() * cfg.nc()) as f64);
            lag_map.insert(
                key,
                LagData {
                    rho,
                    eps: report.per_ut,
                    sigma_v,
                },
            );
        }

        let per_trial: Vec<(T, T)> = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<(T, T)> {
                let est_sf = trial_estimates(t, &plans, &dens, &adcpms, &basic)?;
                let mut ul = T::zero();
                let mut dl = T::zero();
                for &n in &subcarriers {
                    let gram = column_gram(&est_sf, n);
                    for &lag in &layout.ul {
                        let data = &lag_map[&lag.abs()];
                        let g = scaled_gram(&gram, &data.rho);
                        ul = ul + ul_sum_rate(&g, data.sigma_v, &cfg)?;
                    }
                    for &lag in &layout.dl {
                        let data = &lag_map[&lag.abs()];
                        let g = scaled_gram(&gram, &data.rho);
                        dl = dl + dl_sum_rate(&g, data, &cfg)?;
                    }
                }
                Ok((ul, dl))
            })
            .collect::<std::result::Result<_, _>>()?;

        let mut ul_sum = T::zero();
        let mut dl_sum = T::zero();
        for &(u, d) in &per_trial {
            ul_sum = ul_sum + u;
            dl_sum = dl_sum + d;
        }
        let guard = fl::<T>(cfg.nc() as f64) / fl::<T>((cfg.nc() + cfg.ng()) as f64);
        let norm = fl::<T>((spec.trials * subcarriers.len() * spec.frame_len) as f64);
        let ul_se = guard * ul_sum / norm;
        let dl_se = guard * dl_sum / norm;
        rows.push(RateRow {
            scenario: spec.scenario_name().to_string(),
            scheme: spec.scheme,
            frame: spec.frame,
            q: spec.q,
            snr_db: snr,
            ul_se,
            dl_se,
            total_se: ul_se + dl_se,
        });
    }
    rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(RateReport { rows })
}

/// Write rate rows as CSV with the downlink model labeled.
pub fn write_rate_report<T: Scalar>(report: &RateReport<T>, path: &Path) -> Result<()> {
    std::fs::write(path, render_rate_report(report)).map_err(|e| ApspError::io(path, e))
}

fn render_rate_report<T: Scalar>(report: &RateReport<T>) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("scenario,scheme,frame,q,snr_db,ul_se,dl_se,total_se,dl_model\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{:e},rzf-approximation",
            r.scenario,
            r.scheme.name(),
            r.frame.name(),
            r.q,
            r.snr_db,
            r.ul_se,
            r.dl_se,
            r.total_se
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::scenario::TS_SECONDS;
    use crate::channel::{table_config, Scenario, TapProfile, UtProfile};
    use crate::experiments::ScenarioChoice;

    fn single_ut_spec(m: usize) -> ExperimentSpec<f64> {
        let cfg = SystemConfig::new(m, 64, 8, TS_SECONDS, 1).unwrap();
        let taps = vec![
            TapProfile {
                delay_bin: 0,
                relative_power: 1.0,
                mean_aoa: 0.2,
                angle_spread: 0.3,
            },
            TapProfile {
                delay_bin: 1,
                relative_power: 0.7,
                mean_aoa: -0.5,
                angle_spread: 0.3,
            },
            TapProfile {
                delay_bin: 2,
                relative_power: 0.5,
                mean_aoa: 0.8,
                angle_spread: 0.3,
            },
            TapProfile {
                delay_bin: 3,
                relative_power: 0.35,
                mean_aoa: -0.1,
                angle_spread: 0.3,
            },
        ];
        ExperimentSpec {
            cfg,
            scenario: ScenarioChoice::Custom(vec![UtProfile {
                doppler_nu: 0.0,
                taps,
            }]),
            scheme: Scheme::Apsp,
            q: 1,
            snr_db: vec![30.0],
            delta_ells: Vec::new(),
            trials: 8,
            seed: 11,
            frame: FrameKind::TypeA,
            frame_len: 7,
            gamma: 1e-4,
            num_taps: None,
            subcarrier_step: 8,
        }
    }

    /// Per-data-symbol sum rate implied by a report row.
    fn symbol_rate(spec: &ExperimentSpec<f64>, row: &RateRow<f64>) -> f64 {
        let guard = spec.cfg.nc() as f64 / (spec.cfg.nc() + spec.cfg.ng()) as f64;
        let frac = (spec.frame_len - spec.q) as f64 / spec.frame_len as f64;
        row.total_se / (guard * frac)
    }

    #[test]
    fn single_ut_rate_follows_the_matched_filter_as_antennas_double() {
        // With one UT and a clean 30 dB estimate the uplink MMSE receiver
        // reduces to maximum-ratio combining: each subcarrier rate sits near
        // log2(1 + M rho) and doubling M buys about one bit.
        let mut rates = Vec::new();
        for m in [16, 32] {
            let spec = single_ut_spec(m);
            let report = evaluate_spectral_efficiency(&spec).unwrap();
            assert_eq!(report.rows.len(), 1);
            let r = symbol_rate(&spec, &report.rows[0]);
            let ideal = (1.0 + m as f64 * 1000.0).log2();
            assert!(
                (r - ideal).abs() < 1.2,
                "m = {m}: per-symbol rate {r}, matched filter {ideal}"
            );
            rates.push(r);
        }
        let gap = rates[1] - rates[0];
        assert!(gap > 0.6 && gap < 1.4, "doubling gain {gap}");
    }

    #[test]
    fn rate_report_is_deterministic_and_nonnegative() {
        let cfg = SystemConfig::new(8, 32, 4, TS_SECONDS, 2).unwrap();
        let tsym = cfg.tsym();
        let profiles = vec![
            UtProfile {
                doppler_nu: 0.03 / tsym,
                taps: vec![TapProfile {
                    delay_bin: 0,
                    relative_power: 1.0,
                    mean_aoa: -0.4,
                    angle_spread: 0.15,
                }],
            },
            UtProfile {
                doppler_nu: 0.05 / tsym,
                taps: vec![TapProfile {
                    delay_bin: 2,
                    relative_power: 1.0,
                    mean_aoa: 0.6,
                    angle_spread: 0.15,
                }],
            },
        ];
        let spec = ExperimentSpec {
            cfg,
            scenario: ScenarioChoice::Custom(profiles),
            scheme: Scheme::Psop,
            q: 1,
            snr_db: vec![10.0, 0.0],
            delta_ells: Vec::new(),
            trials: 6,
            seed: 5,
            frame: FrameKind::TypeB,
            frame_len: 7,
            gamma: 1e-4,
            num_taps: None,
            subcarrier_step: 4,
        };
        let a = evaluate_spectral_efficiency(&spec).unwrap();
        let b = evaluate_spectral_efficiency(&spec).unwrap();
        assert_eq!(render_rate_report(&a), render_rate_report(&b));
        assert_eq!(a.rows.len(), 2);
        assert!(a.rows[0].snr_db < a.rows[1].snr_db);
        for row in &a.rows {
            assert!(row.ul_se >= 0.0 && row.dl_se >= 0.0);
            assert!((row.total_se - row.ul_se - row.dl_se).abs() < 1e-12);
        }
        let text = render_rate_report(&a);
        assert!(text.starts_with("scenario,scheme,frame,q,snr_db"));
        assert!(text.contains(",psop,type-b,1,"));
        assert!(text.contains("rzf-approximation"));
        // Higher SNR should not hurt the frame rate.
        assert!(a.rows[1].total_se > a.rows[0].total_se);
    }

    #[test]
    fn full_scale_geometry_is_refused() {
        let spec = ExperimentSpec::<f64> {
            cfg: table_config(42).unwrap(),
            scenario: ScenarioChoice::Preset(Scenario::Su),
            ..ExperimentSpec::desk_default().unwrap()
        };
        match evaluate_spectral_efficiency(&spec) {
            Err(ApspError::InstanceTooLarge(msg)) => assert!(msg.contains("4096")),
            other => panic!("expected a size guard, got {other:?}"),
        }
    }
}
