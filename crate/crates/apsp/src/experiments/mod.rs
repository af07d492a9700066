//! Experiment orchestration: scenario sweeps, frame-delay accounting and CSV
//! output.
//!
//! A radio frame of `L` symbols carries one pilot segment of `Q` symbols and
//! `L - Q` data symbols, in one of two layouts:
//!
//! ```text
//! type-A:  P .. P  D D D D ..     pilot first, data at lags 1 .. L-Q
//! type-B:  D D ..  P .. P  D D..  pilot centered, signed lags on both sides
//! ```
//!
//! Every data symbol is scored by its delay `delta_ell` to the nearest pilot
//! edge. A type-A frame reaches lags up to `L - Q`; a type-B frame splits the
//! data into an uplink block before the pilot (negative lags) and a downlink
//! block after it (positive lags), roughly halving the worst-case delay.
//!
//! Two pilot schemes run through the same estimation machinery:
//!
//! * `apsp` - every UT transmits in all `Q` segment symbols under a scheduled
//!   phase shift; estimation sees whatever residual interference the
//!   scheduler threshold admitted.
//! * `psop` - the conventional orthogonal baseline: `floor(Nc/Ng)` UTs per
//!   symbol at shift spacing `Ng`, each group training in its own symbol of
//!   the segment. The problem decomposes into independent single-symbol
//!   groups, so each UT spends one symbol of training energy and sees no
//!   interference, but the segment occupies `ceil(K / floor(Nc/Ng))` symbols.
//!
//! Reported MSE totals are normalized by `Nc K` and per-UT columns by `Nc`,
//! so the total is the mean of the per-UT columns. All Monte Carlo paths
//! draw from seed-derived streams keyed by trial and UT, and rows are sorted
//! before writing, so a sweep rerun with the same spec and seed reproduces
//! its CSV byte for byte regardless of worker count.

pub mod rate;

pub use rate::{evaluate_spectral_efficiency, write_rate_report, RateReport, RateRow};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::channel::scenario::TS_SECONDS;
use crate::channel::{
    build_adcpm, scenario_profiles, Adcpm, Scenario, SystemConfig, TapProfile, UtProfile,
};
use crate::error::{ApspError, Result};
use crate::estimation::{
    analytic_mse_ce, analytic_mse_ce_with_delay, analytic_mse_cp, empirical_mse_with_stderr,
    MseKind, MseReport,
};
use crate::pilots::PilotSchedule;
use crate::rng::{derive_seed, tags};
use crate::scalar::{fl, Scalar};
use crate::scheduling::schedule_apsp;

/// Pilot scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Scheduled adjustable phase shifts, all UTs in every segment symbol.
    Apsp,
    /// Orthogonal baseline, one UT group per segment symbol at spacing `Ng`.
    Psop,
}

impl Scheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "apsp" => Ok(Self::Apsp),
            "psop" => Ok(Self::Psop),
            other => Err(ApspError::Config(format!(
                "unknown scheme '{other}' (expected apsp or psop)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Apsp => "apsp",
            Self::Psop => "psop",
        }
    }
}

/// Frame layout: pilot-first or pilot-centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    TypeA,
    TypeB,
}

impl FrameKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "type-a" | "a" => Ok(Self::TypeA),
            "type-b" | "b" => Ok(Self::TypeB),
            other => Err(ApspError::Config(format!(
                "unknown frame '{other}' (expected type-a or type-b)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TypeA => "type-a",
            Self::TypeB => "type-b",
        }
    }
}

/// Where the UT statistics come from: a named preset or explicit profiles.
#[derive(Debug, Clone)]
pub enum ScenarioChoice<T: Scalar> {
    Preset(Scenario),
    Custom(Vec<UtProfile<T>>),
}

impl<T: Scalar> ScenarioChoice<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Preset(s) => s.name(),
            Self::Custom(_) => "custom",
        }
    }
}

/// Everything a sweep needs: geometry, UT statistics, scheme, frame and the
/// sampling controls.
#[derive(Debug, Clone)]
pub struct ExperimentSpec<T: Scalar> {
    pub cfg: SystemConfig<T>,
    pub scenario: ScenarioChoice<T>,
    pub scheme: Scheme,
    /// Pilot segment length in symbols.
    pub q: usize,
    pub snr_db: Vec<f64>,
    /// Explicit lag list; empty means "use the frame's data-symbol lags".
    pub delta_ells: Vec<i64>,
    pub trials: usize,
    pub seed: u64,
    pub frame: FrameKind,
    pub frame_len: usize,
    /// Scheduler overlap threshold (APSP only).
    pub gamma: T,
    /// Taps per UT for preset scenarios; `None` scales the reference count.
    pub num_taps: Option<usize>,
    /// Rate evaluation looks at every `subcarrier_step`-th subcarrier.
    pub subcarrier_step: usize,
}

/// Segment length the orthogonal baseline needs for `k` UTs:
/// `ceil(k / floor(nc / ng))`.
pub fn psop_segment_length(k: usize, ng: usize, nc: usize) -> usize {
    k.div_ceil((nc / ng).max(1))
}

impl<T: Scalar> ExperimentSpec<T> {
    /// Reduced-geometry starting point: 64 antennas, 512 subcarriers, 36
    /// guard samples, 12 UTs, suburban preset, 200 trials.
    pub fn desk_default() -> Result<Self> {
        Ok(Self {
            cfg: crate::channel::desk_config(12)?,
            scenario: ScenarioChoice::Preset(Scenario::Su),
            scheme: Scheme::Apsp,
            q: 1,
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            delta_ells: Vec::new(),
            trials: 200,
            seed: 1,
            frame: FrameKind::TypeA,
            frame_len: 7,
            gamma: fl::<T>(1e-4),
            num_taps: None,
            subcarrier_step: 8,
        })
    }

    pub fn scenario_name(&self) -> &'static str {
        self.scenario.name()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(ApspError::InvalidArgument("trials = 0".into()));
        }
        if self.q == 0 {
            return Err(ApspError::InvalidDimension("segment length q = 0".into()));
        }
        if self.frame_len <= self.q {
            return Err(ApspError::InvalidArgument(format!(
                "a {}-symbol frame cannot hold a {}-symbol pilot segment plus data",
                self.frame_len, self.q
            )));
        }
        if !(T::zero()..=T::one()).contains(&self.gamma) {
            return Err(ApspError::InvalidArgument(format!(
                "threshold gamma = {} outside [0, 1]",
                self.gamma
            )));
        }
        if self.subcarrier_step == 0 {
            return Err(ApspError::InvalidArgument("subcarrier_step = 0".into()));
        }
        if let ScenarioChoice::Custom(profiles) = &self.scenario {
            if profiles.len() != self.cfg.k() {
                return Err(ApspError::DimensionMismatch(format!(
                    "{} custom profiles for k = {} UTs",
                    profiles.len(),
                    self.cfg.k()
                )));
            }
            for p in profiles {
                p.validate(&self.cfg)?;
            }
        }
        if self.scheme == Scheme::Psop {
            let want = psop_segment_length(self.cfg.k(), self.cfg.ng(), self.cfg.nc());
            if self.q != want {
                return Err(ApspError::Config(format!(
                    "orthogonal scheme with k = {}, nc = {}, ng = {} needs q = {want}, got q = {}",
                    self.cfg.k(),
                    self.cfg.nc(),
                    self.cfg.ng(),
                    self.q
                )));
            }
        }
        Ok(())
    }

    /// UT statistics: drawn from the preset or taken verbatim.
    pub fn profiles(&self) -> Result<Vec<UtProfile<T>>> {
        match &self.scenario {
            ScenarioChoice::Preset(s) => {
                scenario_profiles(*s, &self.cfg, self.num_taps, self.seed)
            }
            ScenarioChoice::Custom(profiles) => Ok(profiles.clone()),
        }
    }

    /// Lags evaluated by MSE sweeps: the explicit list (sorted, deduplicated)
    /// or the frame's data-symbol lags.
    pub fn lags(&self) -> Result<Vec<i64>> {
        if self.delta_ells.is_empty() {
            frame_delay_schedule(self.frame, self.frame_len, self.q)
        } else {
            let mut lags = self.delta_ells.clone();
            lags.sort_unstable();
            lags.dedup();
            Ok(lags)
        }
    }
}

/// Data-symbol lags of a frame, split into the uplink and downlink halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    /// Lags of uplink data symbols, ascending (negative for type-B).
    pub ul: Vec<i64>,
    /// Lags of downlink data symbols, ascending.
    pub dl: Vec<i64>,
}

impl FrameLayout {
    /// All data-symbol lags in ascending order.
    pub fn all(&self) -> Vec<i64> {
        let mut lags = self.ul.clone();
        lags.extend_from_slice(&self.dl);
        lags
    }
}

/// Position every data symbol of the frame relative to the nearest pilot
/// edge. Type-A puts the pilot first and counts lags 1..L-Q, uplink data in
/// the first half. Type-B centers the pilot at symbol `floor((L-Q)/2)`;
/// uplink symbols precede it at negative lags, downlink symbols follow at
/// positive lags, both measured from the segment edge they face.
pub fn frame_layout(frame: FrameKind, frame_len: usize, q: usize) -> Result<FrameLayout> {
    if q == 0 {
        return Err(ApspError::InvalidDimension("segment length q = 0".into()));
    }
    if frame_len <= q {
        return Err(ApspError::InvalidArgument(format!(
            "a {frame_len}-symbol frame cannot hold a {q}-symbol pilot segment plus data"
        )));
    }
    let data = frame_len - q;
    match frame {
        FrameKind::TypeA => {
            let ul: Vec<i64> = (1..=data / 2).map(|l| l as i64).collect();
            let dl: Vec<i64> = (data / 2 + 1..=data).map(|l| l as i64).collect();
            Ok(FrameLayout { ul, dl })
        }
        FrameKind::TypeB => {
            let start = data / 2;
            let ul: Vec<i64> = (0..start).map(|p| p as i64 - start as i64).collect();
            let dl: Vec<i64> = (start + q..frame_len)
                .map(|p| (p - (start + q - 1)) as i64)
                .collect();
            Ok(FrameLayout { ul, dl })
        }
    }
}

/// The frame's data-symbol lags in ascending order.
pub fn frame_delay_schedule(frame: FrameKind, frame_len: usize, q: usize) -> Result<Vec<i64>> {
    Ok(frame_layout(frame, frame_len, q)?.all())
}

/// One independently estimated pilot segment: APSP uses a single plan with
/// all UTs; the orthogonal baseline one plan per group, each a single-symbol
/// schedule over that group's members with its own derived seed.
pub(crate) struct SegmentPlan<T: Scalar> {
    pub(crate) schedule: PilotSchedule<T>,
    pub(crate) cfg: SystemConfig<T>,
    pub(crate) first_ut: usize,
    pub(crate) seed: u64,
}

impl<T: Scalar> SegmentPlan<T> {
    pub(crate) fn members(&self) -> std::ops::Range<usize> {
        self.first_ut..self.first_ut + self.schedule.k()
    }
}

pub(crate) fn segment_plans<T: Scalar>(
    scheme: Scheme,
    q: usize,
    gamma: T,
    seed: u64,
    adcpms: &[Adcpm<T>],
    cfg: &SystemConfig<T>,
) -> Result<Vec<SegmentPlan<T>>> {
    match scheme {
        Scheme::Apsp => {
            let result = schedule_apsp(adcpms, cfg, q, gamma)?;
            Ok(vec![SegmentPlan {
                schedule: result.schedule,
                cfg: cfg.clone(),
                first_ut: 0,
                seed,
            }])
        }
        Scheme::Psop => {
            let k = adcpms.len();
            let per_symbol = (cfg.nc() / cfg.ng()).max(1);
            let mut plans = Vec::new();
            let mut start = 0;
            let mut group = 0u64;
            while start < k {
                let len = per_symbol.min(k - start);
                let shifts: Vec<usize> = (0..len).map(|i| i * cfg.ng()).collect();
                plans.push(SegmentPlan {
                    schedule: PilotSchedule::new(1, cfg.nc(), shifts)?,
                    cfg: cfg.clone().with_k(len)?,
                    first_ut: start,
                    seed: derive_seed(seed, &[tags::GROUP, group]),
                });
                start += len;
                group += 1;
            }
            Ok(plans)
        }
    }
}

/// How a row's numbers were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Analytic,
    Empirical,
}

impl RowSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Empirical => "empirical",
        }
    }
}

/// Evaluate one (kind, lag) point over all segment plans and merge the
/// per-segment reports into one covering every UT. Returns the report with
/// raw (unnormalized) sums plus the Monte Carlo standard error of the total
/// (zero for analytic points).
pub(crate) fn point_report<T: Scalar>(
    plans: &[SegmentPlan<T>],
    source: RowSource,
    kind: MseKind,
    delta_ell: i64,
    trials: usize,
    adcpms: &[Adcpm<T>],
    profiles: &[UtProfile<T>],
) -> Result<(MseReport<T>, T)> {
    let mut per_ut = Vec::with_capacity(adcpms.len());
    let mut bound_total = T::zero();
    let mut var = T::zero();
    for plan in plans {
        let members = plan.members();
        let sub_adcpms = &adcpms[members.clone()];
        let sub_profiles = &profiles[members];
        let (report, stderr) = match source {
            RowSource::Analytic => {
                let report = match kind {
                    MseKind::Ce => analytic_mse_ce(&plan.schedule, sub_adcpms, &plan.cfg)?,
                    MseKind::CeWithDelay => analytic_mse_ce_with_delay(
                        &plan.schedule,
                        sub_adcpms,
                        sub_profiles,
                        delta_ell,
                        &plan.cfg,
                    )?,
                    MseKind::Cp => analytic_mse_cp(
                        &plan.schedule,
                        sub_adcpms,
                        sub_profiles,
                        delta_ell,
                        &plan.cfg,
                    )?,
                };
                (report, T::zero())
            }
            RowSource::Empirical => empirical_mse_with_stderr(
                kind,
                delta_ell,
                trials,
                &plan.schedule,
                sub_profiles,
                &plan.cfg,
                plan.seed,
            )?,
        };
        per_ut.extend(report.per_ut.iter().copied());
        bound_total = bound_total + report.bound_total;
        var = var + stderr * stderr;
    }
    let total = per_ut.iter().copied().fold(T::zero(), |a, b| a + b);
    Ok((
        MseReport {
            kind,
            delta_ell,
            per_ut,
            total,
            bound_total,
        },
        var.sqrt(),
    ))
}

/// One CSV row of an MSE sweep. `total`, `bound` and `stderr` are normalized
/// by `Nc K`; the per-UT entries by `Nc`.
#[derive(Debug, Clone)]
pub struct MseRow<T: Scalar> {
    pub scenario: String,
    pub scheme: Scheme,
    pub q: usize,
    pub snr_db: f64,
    pub kind: MseKind,
    pub delta_ell: i64,
    pub source: RowSource,
    pub total: T,
    pub bound: T,
    pub stderr: T,
    pub per_ut: Vec<T>,
}

fn kind_rank(kind: MseKind) -> u8 {
    match kind {
        MseKind::Ce => 0,
        MseKind::CeWithDelay => 1,
        MseKind::Cp => 2,
    }
}

fn sort_rows<T: Scalar>(rows: &mut [MseRow<T>]) {
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then_with(|| a.scheme.name().cmp(b.scheme.name()))
            .then_with(|| a.q.cmp(&b.q))
            .then_with(|| a.snr_db.total_cmp(&b.snr_db))
            .then_with(|| kind_rank(a.kind).cmp(&kind_rank(b.kind)))
            .then_with(|| a.delta_ell.cmp(&b.delta_ell))
            .then_with(|| a.source.name().cmp(b.source.name()))
    });
}

/// Sweep SNR and delay for the spec's scheme, producing analytic and
/// empirical rows for estimation error (`ce`), the stale estimate at each
/// lag (`ce-delay`) and prediction at each lag (`cp`).
pub fn run_mse_experiment<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<Vec<MseRow<T>>> {
    spec.validate()?;
    let profiles = spec.profiles()?;
    let adcpms: Vec<Adcpm<T>> = profiles
        .iter()
        .map(|p| build_adcpm(p, &spec.cfg))
        .collect::<Result<_>>()?;
    let lags = spec.lags()?;

    let mut points = vec![(MseKind::Ce, 0i64)];
    for &lag in &lags {
        points.push((MseKind::CeWithDelay, lag));
        points.push((MseKind::Cp, lag));
    }

    let mut rows = Vec::new();
    for &snr in &spec.snr_db {
        let cfg = spec
            .cfg
            .clone()
            .with_rho_tr(fl::<T>(10f64.powf(snr / 10.0)))?;
        let plans = segment_plans(spec.scheme, spec.q, spec.gamma, spec.seed, &adcpms, &cfg)?;
        for &(kind, lag) in &points {
            for source in [RowSource::Analytic, RowSource::Empirical] {
                let (report, stderr) =
                    point_report(&plans, source, kind, lag, spec.trials, &adcpms, &profiles)?;
                let scale = fl::<T>((cfg.nc() * report.per_ut.len()) as f64);
                let col = fl::<T>(cfg.nc() as f64);
                rows.push(MseRow {
                    scenario: spec.scenario_name().to_string(),
                    scheme: spec.scheme,
                    q: spec.q,
                    snr_db: snr,
                    kind,
                    delta_ell: lag,
                    source,
                    total: report.total / scale,
                    bound: report.bound_total / scale,
                    stderr: stderr / scale,
                    per_ut: report.per_ut.iter().map(|&v| v / col).collect(),
                });
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Write MSE rows as CSV. The header is fixed up to the UT count and the
/// float formatting is the shortest round-trip representation, so a rerun of
/// the same sweep produces identical bytes.
pub fn write_results<T: Scalar>(rows: &[MseRow<T>], path: &Path) -> Result<()> {
    std::fs::write(path, render_results(rows)?).map_err(|e| ApspError::io(path, e))
}

fn render_results<T: Scalar>(rows: &[MseRow<T>]) -> Result<String> {
    let k = rows.first().map_or(0, |r| r.per_ut.len());
    if rows.iter().any(|r| r.per_ut.len() != k) {
        return Err(ApspError::DimensionMismatch(
            "rows with different UT counts in one table".into(),
        ));
    }
    let mut out = String::new();
    out.push_str("scenario,scheme,q,snr_db,kind,delta_ell,source,total,bound,stderr");
    for ut in 0..k {
        let _ = write!(out, ",ut{ut}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{:e},{:e},{:e}",
            r.scenario,
            r.scheme.name(),
            r.q,
            r.snr_db,
            r.kind.name(),
            r.delta_ell,
            r.source.name(),
            r.total,
            r.bound,
            r.stderr
        );
        for v in &r.per_ut {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Read and validate an experiment spec from a key-value file.
pub fn load_experiment<T: Scalar>(path: &Path) -> Result<ExperimentSpec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| ApspError::io(path, e))?;
    parse_experiment(&text)
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse::<V>()
        .map_err(|_| ApspError::Config(format!("cannot parse {key} = '{value}'")))
}

fn parse_list<V: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value::<V>(key, s))
        .collect()
}

struct CustomUt<T: Scalar> {
    doppler_hz: Option<T>,
    taps: Vec<TapProfile<T>>,
}

impl<T: Scalar> Default for CustomUt<T> {
    fn default() -> Self {
        Self {
            doppler_hz: None,
            taps: Vec::new(),
        }
    }
}

/// Parse an experiment spec from key-value text. Keys and defaults:
///
/// ```text
/// m=128 nc=2048 ng=144 k=42 ts=32.6e-9 sigma_xtr=1   geometry
/// scenario=su|uma|umi|custom  scheme=apsp|psop  q (apsp: 1, psop: derived)
/// snr_db=0,10,20,30  delta_ell=<empty>  trials=200  seed=1
/// frame=type-a|type-b  frame_len=7  gamma=1e-4
/// num_taps=<scaled>  subcarrier_step=8
/// ut.<i>.doppler_hz=<Hz>                    custom scenario only
/// ut.<i>.tap=<bin> <power> <aoa> <spread>   repeatable, radians
/// ```
///
/// `#` starts a comment; for a custom scenario `k` defaults to the number of
/// `ut.<i>` blocks.
pub fn parse_experiment<T: Scalar>(text: &str) -> Result<ExperimentSpec<T>> {
    let mut m = 128usize;
    let mut nc = 2048usize;
    let mut ng = 144usize;
    let mut k: Option<usize> = None;
    let mut ts = TS_SECONDS;
    let mut sigma_xtr = 1.0f64;
    let mut scenario_name = "su".to_string();
    let mut scheme = Scheme::Apsp;
    let mut q: Option<usize> = None;
    let mut snr_db = vec![0.0, 10.0, 20.0, 30.0];
    let mut delta_ells: Vec<i64> = Vec::new();
    let mut trials = 200usize;
    let mut seed = 1u64;
    let mut frame = FrameKind::TypeA;
    let mut frame_len = 7usize;
    let mut gamma = 1e-4f64;
    let mut num_taps: Option<usize> = None;
    let mut subcarrier_step = 8usize;
    let mut custom: BTreeMap<usize, CustomUt<T>> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ApspError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(rest) = key.strip_prefix("ut.") {
            let (index, field) = rest.split_once('.').ok_or_else(|| {
                ApspError::Config(format!("line {}: expected ut.<i>.<field>", lineno + 1))
            })?;
            let index: usize = parse_value("ut index", index)?;
            let entry = custom.entry(index).or_default();
            match field {
                "doppler_hz" => entry.doppler_hz = Some(fl::<T>(parse_value(key, value)?)),
                "tap" => {
                    let fields: Vec<&str> = value.split_whitespace().collect();
                    if fields.len() != 4 {
                        return Err(ApspError::Config(format!(
                            "line {}: tap needs '<bin> <power> <aoa> <spread>'",
                            lineno + 1
                        )));
                    }
                    entry.taps.push(TapProfile {
                        delay_bin: parse_value(key, fields[0])?,
                        relative_power: fl::<T>(parse_value(key, fields[1])?),
                        mean_aoa: fl::<T>(parse_value(key, fields[2])?),
                        angle_spread: fl::<T>(parse_value(key, fields[3])?),
                    });
                }
                other => {
                    return Err(ApspError::Config(format!(
                        "line {}: unknown UT field '{other}'",
                        lineno + 1
                    )))
                }
            }
            continue;
        }
        match key {
            "m" => m = parse_value(key, value)?,
            "nc" => nc = parse_value(key, value)?,
            "ng" => ng = parse_value(key, value)?,
            "k" => k = Some(parse_value(key, value)?),
            "ts" => ts = parse_value(key, value)?,
            "sigma_xtr" => sigma_xtr = parse_value(key, value)?,
            "scenario" => scenario_name = value.to_ascii_lowercase(),
            "scheme" => scheme = Scheme::parse(value)?,
            "q" => q = Some(parse_value(key, value)?),
            "snr_db" => snr_db = parse_list(key, value)?,
            "delta_ell" => delta_ells = parse_list(key, value)?,
            "trials" => trials = parse_value(key, value)?,
            "seed" => seed = parse_value(key, value)?,
            "frame" => frame = FrameKind::parse(value)?,
            "frame_len" => frame_len = parse_value(key, value)?,
            "gamma" => gamma = parse_value(key, value)?,
            "num_taps" => num_taps = Some(parse_value(key, value)?),
            "subcarrier_step" => subcarrier_step = parse_value(key, value)?,
            other => {
                return Err(ApspError::Config(format!(
                    "line {}: unknown key '{other}'",
                    lineno + 1
                )))
            }
        }
    }

    let scenario = if scenario_name == "custom" {
        if custom.is_empty() {
            return Err(ApspError::Config(
                "custom scenario without ut.<i> profile entries".into(),
            ));
        }
        let mut profiles = Vec::with_capacity(custom.len());
        for (want, (index, entry)) in custom.into_iter().enumerate() {
            if index != want {
                return Err(ApspError::Config(format!(
                    "custom UT indices must be contiguous from 0, missing ut.{want}"
                )));
            }
            let doppler_hz = entry.doppler_hz.ok_or_else(|| {
                ApspError::Config(format!("ut.{index} has no doppler_hz entry"))
            })?;
            if entry.taps.is_empty() {
                return Err(ApspError::Config(format!("ut.{index} has no tap entries")));
            }
            profiles.push(UtProfile {
                doppler_nu: doppler_hz,
                taps: entry.taps,
            });
        }
        let n = profiles.len();
        match k {
            Some(k) if k != n => {
                return Err(ApspError::Config(format!(
                    "k = {k} does not match the {n} custom UT profiles"
                )))
            }
            _ => k = Some(n),
        }
        ScenarioChoice::Custom(profiles)
    } else {
        if !custom.is_empty() {
            return Err(ApspError::Config(
                "ut.<i> profile entries require scenario = custom".into(),
            ));
        }
        ScenarioChoice::Preset(Scenario::parse(&scenario_name)?)
    };

    let k = k.unwrap_or(42);
    let cfg = SystemConfig::new(m, nc, ng, fl::<T>(ts), k)?.with_sigma_xtr(fl::<T>(sigma_xtr))?;
    let q = q.unwrap_or_else(|| match scheme {
        Scheme::Apsp => 1,
        Scheme::Psop => psop_segment_length(k, ng, nc),
    });
    let spec = ExperimentSpec {
        cfg,
        scenario,
        scheme,
        q,
        snr_db,
        delta_ells,
        trials,
        seed,
        frame,
        frame_len,
        gamma: fl::<T>(gamma),
        num_taps,
        subcarrier_step,
    };
    spec.validate()?;
    Ok(spec)
}
