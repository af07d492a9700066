//! Pilot phase shift scheduling.
//!
//! Interference between two UTs sharing a phase group is governed by the
//! entry-wise product of their cyclically shifted extended power matrices.
//! The scheduler works with the normalized overlap
//!
//! ```text
//! xi(A, B) = sum(A o B) / (||A||_F ||B||_F)  in [0, 1],
//! ```
//!
//! which is 1 when one matrix is a scaled copy of the other and 0 when the
//! supports are disjoint. The greedy pass assigns UT 0 shift 0 and gives
//! every following UT the smallest single-symbol shift whose overlap against
//! the aggregate of already-placed (shifted) power matrices stays at or
//! below a threshold `gamma`, falling back to the argmin shift when none
//! qualifies. With a `q`-symbol segment the UTs are split round-robin into
//! `q` independent groups first; [`ScheduleOptions`] overrides the visiting
//! order (strongest UT first) and the group membership. An exhaustive
//! minimizer of the closed-form sum estimation MSE serves as the optimality
//! oracle on small instances.

use crate::channel::{extended_shifted_adcpm, Adcpm, SystemConfig};
use crate::error::{ApspError, Result};
use crate::estimation::analytic_mse_ce;
use crate::pilots::PilotSchedule;
use crate::scalar::{fl, Scalar};
use ndarray::Array2;

/// Degree of overlap `xi(A, B)` between two nonnegative matrices.
pub fn overlap<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(ApspError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let na = a.iter().map(|&x| x * x).fold(T::zero(), |s, x| s + x);
    let nb = b.iter().map(|&x| x * x).fold(T::zero(), |s, x| s + x);
    if na == T::zero() || nb == T::zero() {
        return Err(ApspError::UndefinedOverlap(
            "overlap with an all-zero matrix".into(),
        ));
    }
    let num = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| x * y)
        .fold(T::zero(), |s, x| s + x);
    Ok(num / (na.sqrt() * nb.sqrt()))
}

/// Pairwise exact non-overlap results: `pairwise[[a, b]]` is true when the
/// shifted power matrices of UTs `a` and `b` have entry-wise product within
/// tolerance of zero (vacuously true across groups and on the diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct NonOverlapCheck {
    pub pairwise: Array2<bool>,
    pub all_ok: bool,
}

/// Check the exact non-overlap condition for every same-group UT pair.
///
/// `tol` bounds the entries of the shifted-matrix products; `None` uses
/// `1e-12 * max(A) * max(B)` per pair (power matrices are never exactly
/// sparse, so the default scales with the product's natural magnitude).
pub fn check_nonoverlap_condition<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
    tol: Option<T>,
) -> Result<NonOverlapCheck> {
    if schedule.k() != adcpms.len() {
        return Err(ApspError::DimensionMismatch(format!(
            "schedule has {} UTs, got {} power matrices",
            schedule.k(),
            adcpms.len()
        )));
    }
    let k = schedule.k();
    let nc = cfg.nc();
    let extended: Vec<Array2<T>> = (0..k)
        .map(|ut| extended_shifted_adcpm(&adcpms[ut], schedule.base_shift(ut) as i64, nc))
        .collect();
    let mut pairwise = Array2::from_elem((k, k), true);
    let mut all_ok = true;
    for a in 0..k {
        for b in (a + 1)..k {
            if schedule.group(a) != schedule.group(b) {
                continue;
            }
            let pair_tol = tol.unwrap_or_else(|| {
                fl::<T>(1e-12) * adcpms[a].max_entry() * adcpms[b].max_entry()
            });
            let worst = extended[a]
                .iter()
                .zip(extended[b].iter())
                .map(|(&x, &y)| x * y)
                .fold(T::zero(), T::max);
            let ok = worst <= pair_tol;
            pairwise[[a, b]] = ok;
            pairwise[[b, a]] = ok;
            all_ok &= ok;
        }
    }
    Ok(NonOverlapCheck { pairwise, all_ok })
}

/// Scheduling outcome: the shifts, the overlap each UT accepted at placement
/// time (0 for the first UT of a group), and whether the exact non-overlap
/// condition holds for the final allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult<T: Scalar> {
    pub schedule: PilotSchedule<T>,
    pub achieved_overlaps: Vec<T>,
    pub condition_met: bool,
}

/// Order in which the greedy pass visits the UTs of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UtOrder {
    /// Ascending UT index.
    #[default]
    Index,
    /// Strongest total power first; ties fall back to ascending index.
    DescendingTotalPower,
}

/// Group membership rule for multi-symbol segments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum GroupAssignment {
    /// UT `i` joins group `i mod q`.
    #[default]
    RoundRobin,
    /// Caller-provided group index per UT, each in `[0, q)`.
    Explicit(Vec<usize>),
}

/// Greedy scheduler knobs; the defaults reproduce [`schedule_apsp`].
#[derive(Debug, Clone, Default)]
pub struct ScheduleOptions {
    pub order: UtOrder,
    pub groups: GroupAssignment,
}

/// Squared Frobenius norm of a power matrix.
fn power_norm_sqr<T: Scalar>(omega: &Adcpm<T>) -> T {
    omega
        .values()
        .iter()
        .map(|&x| x * x)
        .fold(T::zero(), |s, x| s + x)
}

/// Overlap numerator of `omega` shifted by `x` against an extended aggregate:
/// `sum_{i, j} omega[i, j] * agg[i, (j + x) mod nc]`.
fn shifted_numerator<T: Scalar>(omega: &Adcpm<T>, agg: &Array2<T>, x: usize) -> T {
    let nc = agg.ncols();
    let mut num = T::zero();
    for i in 0..omega.m() {
        for j in 0..omega.ng() {
            num = num + omega.values()[[i, j]] * agg[[i, (j + x) % nc]];
        }
    }
    num
}

/// Greedy threshold scheduling of all UTs with a `q`-symbol segment, visiting
/// UTs in index order and assigning groups round-robin.
pub fn schedule_apsp<T: Scalar>(
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
    q: usize,
    gamma: T,
) -> Result<ScheduleResult<T>> {
    schedule_apsp_with(adcpms, cfg, q, gamma, &ScheduleOptions::default())
}

/// Greedy threshold scheduling with explicit iteration-order and grouping
/// choices.
pub fn schedule_apsp_with<T: Scalar>(
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
    q: usize,
    gamma: T,
    opts: &ScheduleOptions,
) -> Result<ScheduleResult<T>> {
    if adcpms.is_empty() {
        return Err(ApspError::InvalidArgument("no UTs to schedule".into()));
    }
    if q == 0 {
        return Err(ApspError::InvalidDimension("segment length q = 0".into()));
    }
    if !(T::zero()..=T::one()).contains(&gamma) {
        return Err(ApspError::InvalidArgument(format!(
            "threshold gamma = {gamma} outside [0, 1]"
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

    let k = adcpms.len();
    let nc = cfg.nc();
    let group_of: Vec<usize> = match &opts.groups {
        GroupAssignment::RoundRobin => (0..k).map(|ut| ut % q).collect(),
        GroupAssignment::Explicit(groups) => {
            if groups.len() != k {
                return Err(ApspError::DimensionMismatch(format!(
                    "{} group labels for {k} UTs",
                    groups.len()
                )));
            }
            if let Some(&bad) = groups.iter().find(|&&g| g >= q) {
                return Err(ApspError::InvalidArgument(format!(
                    "group label {bad} outside [0, {q})"
                )));
            }
            groups.clone()
        }
    };
    let mut phis = vec![0usize; k];
    let mut achieved = vec![T::zero(); k];
    for group in 0..q {
        let mut members: Vec<usize> = (0..k).filter(|&ut| group_of[ut] == group).collect();
        if opts.order == UtOrder::DescendingTotalPower {
            members.sort_by(|&a, &b| {
                adcpms[b]
                    .total()
                    .partial_cmp(&adcpms[a].total())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
        }
        let mut agg: Array2<T> = Array2::zeros((cfg.m(), nc));
        for (pos, &ut) in members.iter().enumerate() {
            let norm_ut = power_norm_sqr(&adcpms[ut]).sqrt();
            let norm_agg = agg.iter().map(|&x| x * x).fold(T::zero(), |s, x| s + x).sqrt();
            let mut best_shift = 0usize;
            if pos > 0 && norm_ut > T::zero() && norm_agg > T::zero() {
                let scale = T::one() / (norm_ut * norm_agg);
                let mut best = T::infinity();
                let mut accepted = None;
                for x in 0..nc {
                    let xi = shifted_numerator(&adcpms[ut], &agg, x) * scale;
                    if xi <= gamma {
                        accepted = Some((x, xi));
                        break;
                    }
                    if xi < best {
                        best = xi;
                        best_shift = x;
                    }
                }
                let (x, xi) = accepted.unwrap_or((best_shift, best));
                best_shift = x;
                achieved[ut] = xi;
            }
            phis[ut] = best_shift * q + group;
            let placed = extended_shifted_adcpm(&adcpms[ut], best_shift as i64, nc);
            agg.zip_mut_with(&placed, |a, b| *a = *a + *b);
        }
    }
    let schedule = PilotSchedule::new(q, nc, phis)?;
    let condition_met = check_nonoverlap_condition(&schedule, adcpms, cfg, None)?.all_ok;
    Ok(ScheduleResult {
        schedule,
        achieved_overlaps: achieved,
        condition_met,
    })
}

/// Placement-time overlaps of an arbitrary schedule, replaying UTs in index
/// order within each group (the reporting convention of [`schedule_apsp`]).
pub fn replay_overlaps<T: Scalar>(
    schedule: &PilotSchedule<T>,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Vec<T> {
    let k = schedule.k();
    let nc = cfg.nc();
    let mut achieved = vec![T::zero(); k];
    for group in 0..schedule.q() {
        let mut agg: Array2<T> = Array2::zeros((cfg.m(), nc));
        let mut first = true;
        for ut in 0..k {
            if schedule.group(ut) != group {
                continue;
            }
            let x = schedule.base_shift(ut);
            let norm_ut = power_norm_sqr(&adcpms[ut]).sqrt();
            let norm_agg = agg.iter().map(|&v| v * v).fold(T::zero(), |s, v| s + v).sqrt();
            if !first && norm_ut > T::zero() && norm_agg > T::zero() {
                achieved[ut] = shifted_numerator(&adcpms[ut], &agg, x) / (norm_ut * norm_agg);
            }
            let placed = extended_shifted_adcpm(&adcpms[ut], x as i64, nc);
            agg.zip_mut_with(&placed, |a, b| *a = *a + *b);
            first = false;
        }
    }
    achieved
}

/// Exhaustively minimize the closed-form sum estimation MSE over all shift
/// patterns with `phi_0 = 0` (the objective is invariant under a common
/// shift). Guarded to `k <= 4` UTs and `q * nc <= 64` shift values; ties
/// resolve to the lexicographically smallest pattern.
pub fn exhaustive_schedule<T: Scalar>(
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
    q: usize,
) -> Result<ScheduleResult<T>> {
    if adcpms.is_empty() {
        return Err(ApspError::InvalidArgument("no UTs to schedule".into()));
    }
    if q == 0 {
        return Err(ApspError::InvalidDimension("segment length q = 0".into()));
    }
    let k = adcpms.len();
    let space = q * cfg.nc();
    if k > 4 || space > 64 {
        return Err(ApspError::InstanceTooLarge(format!(
            "exhaustive search over {space}^{} patterns (k = {k}, q nc = {space}); \
             limits are k <= 4 and q nc <= 64",
            k.saturating_sub(1)
        )));
    }
    let mut phis = vec![0usize; k];
    let mut best_phis = phis.clone();
    let mut best = T::infinity();
    loop {
        let schedule = PilotSchedule::new(q, cfg.nc(), phis.clone())?;
        let total = analytic_mse_ce(&schedule, adcpms, cfg)?.total;
        if total < best {
            best = total;
            best_phis = phis.clone();
        }
        // odometer over phi_1..phi_{k-1}
        let mut digit = k - 1;
        loop {
            if digit == 0 {
                break;
            }
            phis[digit] += 1;
            if phis[digit] < space {
                break;
            }
            phis[digit] = 0;
            digit -= 1;
        }
        if digit == 0 {
            break;
        }
    }
    let schedule = PilotSchedule::new(q, cfg.nc(), best_phis)?;
    let achieved_overlaps = replay_overlaps(&schedule, adcpms, cfg);
    let condition_met = check_nonoverlap_condition(&schedule, adcpms, cfg, None)?.all_ok;
    Ok(ScheduleResult {
        schedule,
        achieved_overlaps,
        condition_met,
    })
}
