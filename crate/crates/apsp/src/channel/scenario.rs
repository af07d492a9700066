//! Preset propagation scenarios and profile generation.
//!
//! Three WINNER-II style mobility presets (suburban, urban macro, urban
//! micro) fix the normalized Doppler, exponential delay-spread scale and
//! per-tap Laplacian angle spread. Tap delay bins are drawn uniformly
//! without replacement from the guard window, tap powers follow the
//! exponential power delay profile at the drawn delays, and mean AoAs are
//! uniform over the 120 degree sector, all per-UT seeded.

use super::{SystemConfig, TapProfile, UtProfile};
use crate::error::{ApspError, Result};
use crate::rng::{derive_rng, tags};
use crate::scalar::{fl, Scalar};
use rand::seq::index::sample as index_sample;
use rand::Rng;

/// Reference LTE-like numerology: 32.6 ns sampling.
pub const TS_SECONDS: f64 = 32.6e-9;

/// Mobility scenario presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Suburban, 250 km/h.
    Su,
    /// Urban macro, 100 km/h.
    UMa,
    /// Urban micro, 50 km/h.
    UMi,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "su" | "suburban" => Ok(Self::Su),
            "uma" | "urban-macro" => Ok(Self::UMa),
            "umi" | "urban-micro" => Ok(Self::UMi),
            other => Err(ApspError::Config(format!(
                "unknown scenario '{other}' (expected su, uma or umi)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Su => "su",
            Self::UMa => "uma",
            Self::UMi => "umi",
        }
    }

    /// Normalized Doppler `nu * Tsym`.
    pub fn nu_tsym(self) -> f64 {
        match self {
            Self::Su => 31e-3,
            Self::UMa => 14e-3,
            Self::UMi => 6.6e-3,
        }
    }

    /// Exponential power-delay-profile scale in seconds.
    pub fn delay_spread(self) -> f64 {
        match self {
            Self::Su => 0.77e-6,
            Self::UMa => 1.85e-6,
            Self::UMi => 0.62e-6,
        }
    }

    /// Per-tap Laplacian angle spread in radians.
    pub fn angle_spread(self) -> f64 {
        let deg = match self {
            Self::Su => 2.0,
            Self::UMa => 2.0,
            Self::UMi => 10.0,
        };
        deg * std::f64::consts::PI / 180.0
    }
}

/// Full-scale reference configuration: 128 antennas, 2048 subcarriers,
/// 144-sample guard interval, 32.6 ns sampling.
pub fn table_config<T: Scalar>(k: usize) -> Result<SystemConfig<T>> {
    SystemConfig::new(128, 2048, 144, fl::<T>(TS_SECONDS), k)
}

/// Reduced geometry with the same aspect ratios, small enough for quick
/// Monte Carlo runs: 64 antennas, 512 subcarriers, 36-sample guard interval.
pub fn desk_config<T: Scalar>(k: usize) -> Result<SystemConfig<T>> {
    SystemConfig::new(64, 512, 36, fl::<T>(TS_SECONDS), k)
}

/// Default tap count for a guard window: 20 taps at the reference `Ng = 144`,
/// scaled proportionally (at least one).
pub fn default_num_taps(ng: usize) -> usize {
    ((20.0 * ng as f64 / 144.0).round() as usize).max(1)
}

/// Draw the per-UT statistical profiles of all `cfg.k()` UTs for a scenario.
///
/// UT `k` uses the derived streams `(seed, TAPS, k)` for delay-bin placement
/// and `(seed, AOA, k)` for mean angles, so profiles are stable regardless of
/// what else consumes randomness.
pub fn scenario_profiles<T: Scalar>(
    scenario: Scenario,
    cfg: &SystemConfig<T>,
    num_taps: Option<usize>,
    seed: u64,
) -> Result<Vec<UtProfile<T>>> {
    let taps = num_taps.unwrap_or_else(|| default_num_taps(cfg.ng()));
    if taps == 0 || taps > cfg.ng() {
        return Err(ApspError::InvalidArgument(format!(
            "need 1..={} taps inside the guard window, got {taps}",
            cfg.ng()
        )));
    }
    let spread = fl::<T>(scenario.angle_spread());
    let doppler = fl::<T>(scenario.nu_tsym()) / cfg.tsym();
    let sector = T::FRAC_PI_3();
    let varsigma = fl::<T>(scenario.delay_spread());
    (0..cfg.k())
        .map(|ut| {
            let mut bin_rng = derive_rng(seed, &[tags::TAPS, ut as u64]);
            let mut bins: Vec<usize> = index_sample(&mut bin_rng, cfg.ng(), taps).into_vec();
            bins.sort_unstable();
            let mut aoa_rng = derive_rng(seed, &[tags::AOA, ut as u64]);
            let taps = bins
                .into_iter()
                .map(|bin| {
                    let u: T = fl::<T>(aoa_rng.gen_range(-1.0..=1.0));
                    TapProfile {
                        delay_bin: bin,
                        relative_power: (-(fl::<T>(bin as f64) * cfg.ts()) / varsigma).exp(),
                        mean_aoa: u * sector,
                        angle_spread: spread,
                    }
                })
                .collect();
            let profile = UtProfile {
                doppler_nu: doppler,
                taps,
            };
            profile.validate(cfg)?;
            Ok(profile)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        assert_eq!(Scenario::parse("SU").unwrap(), Scenario::Su);
        assert_eq!(Scenario::parse("UrBan-Macro").unwrap(), Scenario::UMa);
        assert!(Scenario::parse("rural").is_err());
        assert_eq!(Scenario::UMi.nu_tsym(), 6.6e-3);
        assert_eq!(Scenario::UMa.delay_spread(), 1.85e-6);
        assert!((Scenario::UMi.angle_spread() - 10.0f64.to_radians()).abs() < 1e-15);
        let cfg = table_config::<f64>(42).unwrap();
        assert_eq!((cfg.m(), cfg.nc(), cfg.ng(), cfg.k()), (128, 2048, 144, 42));
        // symbol duration ~71.4 us
        assert!((cfg.tsym() - 71.4e-6).abs() < 0.1e-6);
        assert_eq!(default_num_taps(144), 20);
        assert_eq!(default_num_taps(36), 5);
        assert_eq!(default_num_taps(1), 1);
    }

    #[test]
    fn profiles_are_deterministic_and_valid() {
        let cfg = desk_config::<f64>(6).unwrap();
        let a = scenario_profiles(Scenario::Su, &cfg, None, 7).unwrap();
        let b = scenario_profiles(Scenario::Su, &cfg, None, 7).unwrap();
        assert_eq!(a, b);
        let c = scenario_profiles(Scenario::Su, &cfg, None, 8).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 6);
        for profile in &a {
            assert_eq!(profile.taps.len(), default_num_taps(cfg.ng()));
            profile.validate(&cfg).unwrap();
            for tap in &profile.taps {
                assert!(tap.mean_aoa.abs() <= std::f64::consts::FRAC_PI_3);
                assert!(tap.relative_power > 0.0 && tap.relative_power <= 1.0);
            }
            // powers decay with delay per the exponential profile
            for pair in profile.taps.windows(2) {
                assert!(pair[0].delay_bin < pair[1].delay_bin);
                assert!(pair[0].relative_power >= pair[1].relative_power);
            }
            let expect_nu = Scenario::Su.nu_tsym() / cfg.tsym();
            assert!((profile.doppler_nu - expect_nu).abs() < 1e-9 * expect_nu);
        }
        // different UTs get different sparsity patterns (with high probability)
        let bins0: Vec<_> = a[0].taps.iter().map(|t| t.delay_bin).collect();
        let bins1: Vec<_> = a[1].taps.iter().map(|t| t.delay_bin).collect();
        assert_ne!(bins0, bins1);
    }

    #[test]
    fn profile_generation_rejects_too_many_taps() {
        let cfg = desk_config::<f64>(2).unwrap();
        assert!(scenario_profiles::<f64>(Scenario::Su, &cfg, Some(37), 1).is_err());
        assert!(scenario_profiles::<f64>(Scenario::Su, &cfg, Some(0), 1).is_err());
    }
}
