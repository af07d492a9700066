//! Pilot sequence construction and scheduling containers.
//!
//! All user terminals share one frequency-domain base sequence `x` of unit
//! modulus (`|x_n| = 1`). UT `k` transmits an adjustable phase shift pilot
//! (APSP): over a single symbol
//!
//! ```text
//! x_k[n] = sqrt(sigma_xtr) exp(-j 2 pi n phi_k / Nc) x[n],
//! ```
//!
//! a pure frequency-domain phase ramp, equivalently a cyclic shift of the
//! time-domain sequence (so the PAPR of the base sequence is preserved).
//! Cross-correlations depend only on the shift difference:
//! `X_a X_b^H = sigma_xtr D_{phi_a - phi_b}` with
//! `D_d = diag(exp(-j 2 pi n d / Nc))`.
//!
//! Over a pilot segment of `Q` symbols the shift index ranges in
//! `[0, Q Nc)`; with a `Q x Q` unitary `U`, UT `k` sends on symbol `q`
//!
//! ```text
//! x_{k,q}[n] = sqrt(Q) [U]_{phi mod Q, q} x_single(floor(phi / Q))[n],
//! ```
//!
//! which partitions the UTs into `Q` orthogonal groups by `phi mod Q`:
//! summed over the segment, `X_a X_b^H = sigma_xtr Q delta(group)
//! D_{floor(phi_a/Q) - floor(phi_b/Q)}`.
//!
//! The conventional orthogonal baseline (shift differences of at least `Ng`)
//! is produced by [`make_psop_schedule`], packing `floor(Nc/Ng)` UTs per
//! symbol.

use crate::error::{ApspError, Result};
use crate::scalar::{fl, Scalar};
use crate::transforms::{dft_matrix, ComplexMatrix};
use ndarray::{Array1, Array2};
use num_complex::Complex;
use std::fmt::Write as _;
use std::path::Path;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Base sequence family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicPilotKind {
    /// All entries one. Useful in tests; poor PAPR.
    AllOnes,
    /// Constant-amplitude zero-autocorrelation sequence with the given root
    /// (quadratic-phase construction; the root must be coprime with `Nc`).
    RootSequence { root: usize },
}

/// Unit-modulus frequency-domain base pilot shared by all UTs.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicPilot<T: Scalar> {
    kind: BasicPilotKind,
    x: Array1<Complex<T>>,
}

impl<T: Scalar> BasicPilot<T> {
    pub fn kind(&self) -> BasicPilotKind {
        self.kind
    }
    pub fn nc(&self) -> usize {
        self.x.len()
    }
    pub fn values(&self) -> &Array1<Complex<T>> {
        &self.x
    }
}

/// Build the shared base sequence.
///
/// Root sequences use the quadratic integer phase `root * n^2` (even `Nc`)
/// or `root * n * (n+1)` (odd `Nc`) in units of `pi / Nc`, reduced mod
/// `2 Nc` before the trigonometric evaluation so the phases are exact.
pub fn make_basic_pilot<T: Scalar>(nc: usize, kind: BasicPilotKind) -> Result<BasicPilot<T>> {
    if nc == 0 {
        return Err(ApspError::InvalidDimension("nc = 0".into()));
    }
    let x = match kind {
        BasicPilotKind::AllOnes => Array1::from_elem(nc, Complex::new(T::one(), T::zero())),
        BasicPilotKind::RootSequence { root } => {
            if root == 0 || gcd(root, nc) != 1 {
                return Err(ApspError::InvalidArgument(format!(
                    "root {root} is not coprime with nc = {nc}"
                )));
            }
            let two_nc = 2 * nc as u64;
            let r = root as u64 % two_nc;
            Array1::from_iter((0..nc as u64).map(|n| {
                let quad = if nc % 2 == 0 {
                    (n * n) % two_nc
                } else {
                    (n * (n + 1)) % two_nc
                };
                let p = (r * quad) % two_nc;
                let ang = -T::PI() * fl::<T>(p as f64) / fl::<T>(nc as f64);
                Complex::from_polar(T::one(), ang)
            }))
        }
    };
    Ok(BasicPilot { kind, x })
}

/// Pilot of one UT over a `Q`-symbol segment: row `q` is the frequency-domain
/// sequence sent on symbol `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot<T: Scalar> {
    phi: usize,
    symbols: ComplexMatrix<T>,
}

impl<T: Scalar> Pilot<T> {
    pub fn phi(&self) -> usize {
        self.phi
    }
    pub fn q(&self) -> usize {
        self.symbols.nrows()
    }
    pub fn nc(&self) -> usize {
        self.symbols.ncols()
    }
    pub fn symbols(&self) -> &ComplexMatrix<T> {
        &self.symbols
    }
    /// Sequence of one segment symbol.
    pub fn symbol(&self, q: usize) -> ndarray::ArrayView1<'_, Complex<T>> {
        self.symbols.row(q)
    }
}

/// Single-symbol APSP with shift `phi` in `[0, Nc)`.
pub fn make_apsp_single<T: Scalar>(
    basic: &BasicPilot<T>,
    phi: usize,
    sigma_xtr: T,
) -> Result<Pilot<T>> {
    let nc = basic.nc();
    if phi >= nc {
        return Err(ApspError::InvalidArgument(format!(
            "phase shift {phi} outside [0, {nc})"
        )));
    }
    if !sigma_xtr.is_finite() || sigma_xtr <= T::zero() {
        return Err(ApspError::Domain(format!("sigma_xtr = {sigma_xtr}")));
    }
    let amp = sigma_xtr.sqrt();
    let mut symbols = Array2::zeros((1, nc));
    for n in 0..nc {
        let p = (n * phi) % nc;
        let ang = -T::TAU() * fl::<T>(p as f64) / fl::<T>(nc as f64);
        symbols[[0, n]] = Complex::from_polar(amp, ang) * basic.x[n];
    }
    Ok(Pilot { phi, symbols })
}

fn unitarity_error<T: Scalar>(u: &ComplexMatrix<T>) -> T {
    let q = u.nrows();
    let mut worst = T::zero();
    for a in 0..q {
        for b in 0..q {
            let mut acc = Complex::new(T::zero(), T::zero());
            for r in 0..q {
                acc = acc + u[[r, a]].conj() * u[[r, b]];
            }
            let target = if a == b { T::one() } else { T::zero() };
            worst = worst.max((acc - Complex::new(target, T::zero())).norm());
        }
    }
    worst
}

/// APSP over a `q`-symbol segment with shift `phi` in `[0, q * Nc)` and a
/// `q x q` unitary spreading matrix `u`.
pub fn make_apsp_multi<T: Scalar>(
    basic: &BasicPilot<T>,
    u: &ComplexMatrix<T>,
    phi: usize,
    q: usize,
    sigma_xtr: T,
) -> Result<Pilot<T>> {
    if q == 0 {
        return Err(ApspError::InvalidDimension("segment length q = 0".into()));
    }
    let nc = basic.nc();
    if phi >= q * nc {
        return Err(ApspError::InvalidArgument(format!(
            "phase shift {phi} outside [0, {})",
            q * nc
        )));
    }
    if u.dim() != (q, q) {
        return Err(ApspError::DimensionMismatch(format!(
            "spreading matrix is {:?}, want ({q}, {q})",
            u.dim()
        )));
    }
    let tol = fl::<T>(1e-10).max(T::epsilon() * fl::<T>(100.0));
    let uerr = unitarity_error(u);
    if uerr > tol {
        return Err(ApspError::InvalidArgument(format!(
            "spreading matrix is not unitary (deviation {uerr:e})"
        )));
    }
    let group = phi % q;
    let base = make_apsp_single(basic, phi / q, sigma_xtr)?;
    let gain = fl::<T>(q as f64).sqrt();
    let mut symbols = Array2::zeros((q, nc));
    for s in 0..q {
        let w = u[[group, s]].scale(gain);
        for n in 0..nc {
            symbols[[s, n]] = w * base.symbols[[0, n]];
        }
    }
    Ok(Pilot { phi, symbols })
}

/// Default spreading matrix: the `q`-point unitary DFT.
pub fn default_unitary<T: Scalar>(q: usize) -> Result<ComplexMatrix<T>> {
    dft_matrix(q)
}

/// Summed segment cross-correlation `X_a X_b^H`. Both operands are diagonal
/// per symbol, so the product is diagonal; the diagonal is returned as a
/// vector with entries `sum_q x_{a,q}[n] conj(x_{b,q}[n])`.
pub fn pilot_cross_correlation<T: Scalar>(
    a: &Pilot<T>,
    b: &Pilot<T>,
) -> Result<Array1<Complex<T>>> {
    if a.q() != b.q() || a.nc() != b.nc() {
        return Err(ApspError::DimensionMismatch(format!(
            "pilot segments {}x{} vs {}x{}",
            a.q(),
            a.nc(),
            b.q(),
            b.nc()
        )));
    }
    let mut diag = Array1::zeros(a.nc());
    for q in 0..a.q() {
        for n in 0..a.nc() {
            diag[n] = diag[n] + a.symbols[[q, n]] * b.symbols[[q, n]].conj();
        }
    }
    Ok(diag)
}

/// Per-UT pilot assignment: UT `ut` uses phase shift index `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PilotAssignment {
    pub ut: usize,
    pub phi: usize,
}

/// Complete pilot allocation of a cell: segment length, per-UT shifts and
/// the spreading matrix (identity-like DFT by default).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSchedule<T: Scalar> {
    q: usize,
    nc: usize,
    phis: Vec<usize>,
    unitary: ComplexMatrix<T>,
}

impl<T: Scalar> PilotSchedule<T> {
    /// Schedule with per-UT shifts `phis` (UT index = position) and the
    /// default DFT spreading matrix.
    pub fn new(q: usize, nc: usize, phis: Vec<usize>) -> Result<Self> {
        if q == 0 || nc == 0 {
            return Err(ApspError::InvalidDimension(format!(
                "segment length q = {q}, nc = {nc}"
            )));
        }
        if phis.is_empty() {
            return Err(ApspError::InvalidArgument("no assignments".into()));
        }
        if let Some(&bad) = phis.iter().find(|&&p| p >= q * nc) {
            return Err(ApspError::OutOfRange(format!(
                "phase shift {bad} outside [0, {})",
                q * nc
            )));
        }
        Ok(Self {
            q,
            nc,
            phis,
            unitary: default_unitary(q)?,
        })
    }

    pub fn with_unitary(mut self, u: ComplexMatrix<T>) -> Result<Self> {
        if u.dim() != (self.q, self.q) {
            return Err(ApspError::DimensionMismatch(format!(
                "spreading matrix is {:?}, want ({q}, {q})",
                u.dim(),
                q = self.q
            )));
        }
        let tol = fl::<T>(1e-10).max(T::epsilon() * fl::<T>(100.0));
        if unitarity_error(&u) > tol {
            return Err(ApspError::InvalidArgument(
                "spreading matrix is not unitary".into(),
            ));
        }
        self.unitary = u;
        Ok(self)
    }

    pub fn q(&self) -> usize {
        self.q
    }
    pub fn nc(&self) -> usize {
        self.nc
    }
    /// Number of UTs.
    pub fn k(&self) -> usize {
        self.phis.len()
    }
    pub fn phi(&self, ut: usize) -> usize {
        self.phis[ut]
    }
    pub fn phis(&self) -> &[usize] {
        &self.phis
    }
    pub fn unitary(&self) -> &ComplexMatrix<T> {
        &self.unitary
    }
    /// Phase group of a UT (`phi mod q`); only same-group UTs interfere.
    pub fn group(&self, ut: usize) -> usize {
        self.phis[ut] % self.q
    }
    /// Single-symbol shift of a UT (`floor(phi / q)`).
    pub fn base_shift(&self, ut: usize) -> usize {
        self.phis[ut] / self.q
    }

    /// Construct UT `ut`'s pilot for this schedule.
    pub fn build_pilot(&self, ut: usize, basic: &BasicPilot<T>, sigma_xtr: T) -> Result<Pilot<T>> {
        if ut >= self.k() {
            return Err(ApspError::OutOfRange(format!(
                "ut {ut} outside schedule with k = {}",
                self.k()
            )));
        }
        if basic.nc() != self.nc {
            return Err(ApspError::DimensionMismatch(format!(
                "base sequence length {} vs schedule nc = {}",
                basic.nc(),
                self.nc
            )));
        }
        make_apsp_multi(basic, &self.unitary, self.phis[ut], self.q, sigma_xtr)
    }

    /// Plain-text form: a `q=.. nc=..` header, then one `ut phi` line per UT.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "q={} nc={}", self.q, self.nc);
        for (ut, phi) in self.phis.iter().enumerate() {
            let _ = writeln!(out, "{ut} {phi}");
        }
        out
    }

    /// Parse the [`to_text`](Self::to_text) format. The spreading matrix is
    /// not serialized; the loaded schedule uses the default DFT.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| ApspError::Config("empty schedule file".into()))?;
        let mut q = None;
        let mut nc = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("q", v)) => q = v.parse::<usize>().ok(),
                Some(("nc", v)) => nc = v.parse::<usize>().ok(),
                _ => {
                    return Err(ApspError::Config(format!(
                        "bad schedule header field '{field}'"
                    )))
                }
            }
        }
        let (q, nc) = match (q, nc) {
            (Some(q), Some(nc)) => (q, nc),
            _ => {
                return Err(ApspError::Config(format!(
                    "schedule header '{header}' is missing q= or nc="
                )))
            }
        };
        let mut entries = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let (ut, phi) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => (
                    a.parse::<usize>()
                        .map_err(|_| ApspError::Config(format!("bad ut index '{a}'")))?,
                    b.parse::<usize>()
                        .map_err(|_| ApspError::Config(format!("bad phase shift '{b}'")))?,
                ),
                _ => {
                    return Err(ApspError::Config(format!(
                        "bad schedule line '{line}' (want 'ut phi')"
                    )))
                }
            };
            entries.push((ut, phi));
        }
        entries.sort_unstable();
        for (pos, (ut, _)) in entries.iter().enumerate() {
            if *ut != pos {
                return Err(ApspError::Config(format!(
                    "schedule UT indices are not 0..k (missing or duplicate around {ut})"
                )));
            }
        }
        Self::new(q, nc, entries.into_iter().map(|(_, phi)| phi).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| ApspError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ApspError::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Conventional orthogonal baseline: `floor(Nc/Ng)` UTs per symbol with
/// shifts spaced `Ng` apart, over `Q = ceil(K / floor(Nc/Ng))` symbols.
/// UT `k` lands in group `floor(k / C)` with single-symbol shift
/// `(k mod C) * Ng`.
pub fn make_psop_schedule<T: Scalar>(k: usize, ng: usize, nc: usize) -> Result<PilotSchedule<T>> {
    if k == 0 {
        return Err(ApspError::InvalidDimension("k = 0".into()));
    }
    if ng == 0 || ng > nc {
        return Err(ApspError::InvalidDimension(format!(
            "need 0 < ng <= nc, got ng = {ng}, nc = {nc}"
        )));
    }
    let per_symbol = nc / ng;
    let q = k.div_ceil(per_symbol);
    let phis = (0..k)
        .map(|ut| (ut % per_symbol) * ng * q + ut / per_symbol)
        .collect();
    PilotSchedule::new(q, nc, phis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use num_complex::Complex64;
    use rand::Rng;

    fn closed_form(
        nc: usize,
        q: usize,
        phi_a: usize,
        phi_b: usize,
        sigma: f64,
    ) -> Array1<Complex64> {
        if phi_a % q != phi_b % q {
            return Array1::zeros(nc);
        }
        let d = phi_a as i64 / q as i64 - phi_b as i64 / q as i64;
        Array1::from_iter((0..nc).map(|n| {
            let ang = -std::f64::consts::TAU * (n as i64 * d) as f64 / nc as f64;
            Complex64::from_polar(sigma * q as f64, ang)
        }))
    }

    #[test]
    fn basic_pilot_shapes() {
        let ones = make_basic_pilot::<f64>(4, BasicPilotKind::AllOnes).unwrap();
        for v in ones.values() {
            assert_eq!(*v, Complex64::new(1.0, 0.0));
        }
        for nc in [8usize, 15, 64] {
            let root = if nc % 2 == 0 { nc - 1 } else { 2 };
            let p = make_basic_pilot::<f64>(nc, BasicPilotKind::RootSequence { root }).unwrap();
            for v in p.values() {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
        let a = make_basic_pilot::<f64>(8, BasicPilotKind::RootSequence { root: 1 }).unwrap();
        let b = make_basic_pilot::<f64>(8, BasicPilotKind::RootSequence { root: 3 }).unwrap();
        assert_ne!(a, b);
        assert!(make_basic_pilot::<f64>(8, BasicPilotKind::RootSequence { root: 2 }).is_err());
        assert!(make_basic_pilot::<f64>(8, BasicPilotKind::RootSequence { root: 0 }).is_err());
    }

    #[test]
    fn single_symbol_shift_structure() {
        let basic = make_basic_pilot::<f64>(8, BasicPilotKind::AllOnes).unwrap();
        let p0 = make_apsp_single(&basic, 0, 4.0).unwrap();
        for v in p0.symbol(0) {
            assert!((v - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        }
        // half-period shift alternates sign
        let p4 = make_apsp_single(&basic, 4, 1.0).unwrap();
        for (n, v) in p4.symbol(0).iter().enumerate() {
            let want = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - Complex64::new(want, 0.0)).norm() < 1e-12, "n = {n}");
        }
        assert!(make_apsp_single(&basic, 8, 1.0).is_err());
        assert!(make_apsp_single(&basic, 0, 0.0).is_err());
    }

    #[test]
    fn phase_shift_preserves_time_domain_papr() {
        let nc = 16;
        let basic = make_basic_pilot::<f64>(nc, BasicPilotKind::RootSequence { root: 3 }).unwrap();
        let papr = |p: &Pilot<f64>| {
            // time samples t: (1/nc) sum_n X[n] exp(+j 2 pi n t / nc)
            let mut peak: f64 = 0.0;
            let mut mean = 0.0;
            for t in 0..nc {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..nc {
                    let ang = std::f64::consts::TAU * (n * t) as f64 / nc as f64;
                    acc += p.symbols()[[0, n]] * Complex64::from_polar(1.0, ang);
                }
                let pow = (acc / nc as f64).norm_sqr();
                peak = peak.max(pow);
                mean += pow / nc as f64;
            }
            peak / mean
        };
        let reference = papr(&make_apsp_single(&basic, 0, 1.0).unwrap());
        for phi in [3usize, 9, 15] {
            let shifted = papr(&make_apsp_single(&basic, phi, 1.0).unwrap());
            assert!(
                (shifted - reference).abs() < 1e-9,
                "phi = {phi}: {shifted} vs {reference}"
            );
        }
    }

    #[test]
    fn multi_symbol_reduces_to_single_for_q1() {
        let basic = make_basic_pilot::<f64>(16, BasicPilotKind::RootSequence { root: 5 }).unwrap();
        let u = default_unitary::<f64>(1).unwrap();
        let single = make_apsp_single(&basic, 7, 2.0).unwrap();
        let multi = make_apsp_multi(&basic, &u, 7, 1, 2.0).unwrap();
        let err: f64 = single
            .symbols()
            .iter()
            .zip(multi.symbols().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn multi_symbol_rejects_bad_inputs() {
        let basic = make_basic_pilot::<f64>(8, BasicPilotKind::AllOnes).unwrap();
        let u = default_unitary::<f64>(2).unwrap();
        assert!(make_apsp_multi(&basic, &u, 16, 2, 1.0).is_err());
        let not_unitary = Array2::from_elem((2, 2), Complex64::new(1.0, 0.0));
        assert!(make_apsp_multi(&basic, &not_unitary, 0, 2, 1.0).is_err());
        let wrong_dim = default_unitary::<f64>(3).unwrap();
        assert!(make_apsp_multi(&basic, &wrong_dim, 0, 2, 1.0).is_err());
    }

    #[test]
    fn cross_correlation_matches_closed_form() {
        let nc = 32;
        let sigma = 1.7;
        let basic = make_basic_pilot::<f64>(nc, BasicPilotKind::RootSequence { root: 7 }).unwrap();

        // same pilot: sigma * I
        let p = make_apsp_single(&basic, 3, sigma).unwrap();
        let d = pilot_cross_correlation(&p, &p).unwrap();
        for v in &d {
            assert!((v - Complex64::new(sigma, 0.0)).norm() < 1e-12);
        }

        // different groups are exactly orthogonal
        let u = default_unitary::<f64>(2).unwrap();
        let a = make_apsp_multi(&basic, &u, 0, 2, sigma).unwrap();
        let b = make_apsp_multi(&basic, &u, 1, 2, sigma).unwrap();
        let d = pilot_cross_correlation(&a, &b).unwrap();
        for v in &d {
            assert!(v.norm() < 1e-12);
        }

        // same group, base shift difference 1
        let c = make_apsp_multi(&basic, &u, 2, 2, sigma).unwrap();
        let d = pilot_cross_correlation(&a, &c).unwrap();
        let want = closed_form(nc, 2, 0, 2, sigma);
        for (got, expect) in d.iter().zip(want.iter()) {
            assert!((got - expect).norm() < 1e-10);
        }

        // randomized triples against the closed form
        let mut rng = derive_rng(31, &[0]);
        for _ in 0..100 {
            let q = rng.gen_range(1..=4usize);
            let phi_a = rng.gen_range(0..q * nc);
            let phi_b = rng.gen_range(0..q * nc);
            let u = default_unitary::<f64>(q).unwrap();
            let a = make_apsp_multi(&basic, &u, phi_a, q, sigma).unwrap();
            let b = make_apsp_multi(&basic, &u, phi_b, q, sigma).unwrap();
            let got = pilot_cross_correlation(&a, &b).unwrap();
            let want = closed_form(nc, q, phi_a, phi_b, sigma);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).norm() < 1e-10, "q={q} a={phi_a} b={phi_b}");
            }
        }
    }

    #[test]
    fn psop_schedule_packing() {
        // full-scale geometry: 14 UTs per symbol, 42 UTs need 3 symbols
        let s = make_psop_schedule::<f64>(42, 144, 2048).unwrap();
        assert_eq!(s.q(), 3);
        assert_eq!(s.k(), 42);
        for ut in 0..42 {
            assert_eq!(s.group(ut), ut / 14);
            assert_eq!(s.base_shift(ut), (ut % 14) * 144);
        }
        // one UT: trivial schedule
        let s1 = make_psop_schedule::<f64>(1, 144, 2048).unwrap();
        assert_eq!((s1.q(), s1.phi(0)), (1, 0));
        // 14 UTs fit in one symbol with shifts spaced by ng
        let s14 = make_psop_schedule::<f64>(14, 144, 2048).unwrap();
        assert_eq!(s14.q(), 1);
        for ut in 0..14 {
            assert_eq!(s14.phi(ut), ut * 144);
        }
        // minimum cyclic shift distance within a group is >= ng
        for sched in [&s, &s14] {
            let nc = sched.nc() as i64;
            for a in 0..sched.k() {
                for b in 0..a {
                    if sched.group(a) == sched.group(b) {
                        let d = (sched.base_shift(a) as i64 - sched.base_shift(b) as i64)
                            .rem_euclid(nc);
                        assert!(d.min(nc - d) >= 144, "uts {a},{b}");
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_text_round_trip() {
        let s = make_psop_schedule::<f64>(5, 4, 16).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("q=2 nc=16\n"));
        let back = PilotSchedule::<f64>::from_text(&text).unwrap();
        assert_eq!(back, s);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schedule.txt");
        s.save(&path).unwrap();
        assert_eq!(PilotSchedule::<f64>::load(&path).unwrap(), s);

        assert!(PilotSchedule::<f64>::from_text("").is_err());
        assert!(PilotSchedule::<f64>::from_text("q=2\n0 0").is_err());
        assert!(PilotSchedule::<f64>::from_text("q=2 nc=16\n0 0 7").is_err());
        assert!(PilotSchedule::<f64>::from_text("q=2 nc=16\n1 0").is_err());
        assert!(PilotSchedule::<f64>::from_text("q=2 nc=16\n0 32").is_err());
    }

    #[test]
    fn schedule_accessors_and_pilot_builder() {
        let s = PilotSchedule::<f64>::new(2, 16, vec![0, 1, 6]).unwrap();
        assert_eq!(s.k(), 3);
        assert_eq!((s.group(2), s.base_shift(2)), (0, 3));
        let basic = make_basic_pilot::<f64>(16, BasicPilotKind::AllOnes).unwrap();
        let pilot = s.build_pilot(2, &basic, 1.0).unwrap();
        assert_eq!((pilot.q(), pilot.nc(), pilot.phi()), (2, 16, 6));
        assert!(s.build_pilot(3, &basic, 1.0).is_err());
        let short = make_basic_pilot::<f64>(8, BasicPilotKind::AllOnes).unwrap();
        assert!(s.build_pilot(0, &short, 1.0).is_err());
        assert!(PilotSchedule::<f64>::new(2, 16, vec![32]).is_err());
    }
}
