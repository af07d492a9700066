//! Deterministic transform kernels.
//!
//! Conventions used throughout the crate:
//!
//! * `F_N` is the unitary DFT matrix, `[F_N]_{n,q} = exp(-j 2 pi n q / N) / sqrt(N)`.
//! * `F_{N x L}` keeps the first `L` columns of `F_N`.
//! * `V_M` is the centered unitary DFT used on the antenna axis,
//!   `[V_M]_{i,j} = exp(-j 2 pi i (j - M/2) / M) / sqrt(M)`; its columns sample
//!   the array steering vector on the grid `theta_j = arcsin(2 j / M - 1)`.
//! * `Pi_N^n` cyclically shifts the columns of a matrix right by `n`, i.e.
//!   column `c` of `A * Pi_N^n` is column `(c - n) mod N` of `A`.
//!
//! The products with `V_M` and `F_{N x L}` are evaluated with FFTs; the
//! explicit matrices are only built for small sizes and for tests.

use crate::error::{ApspError, Result};
use crate::scalar::{fl, Scalar};
use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::FftPlanner;

/// Dense complex matrix in the working precision.
pub type ComplexMatrix<T> = Array2<Complex<T>>;

/// Unitary DFT matrix of size `n`.
pub fn dft_matrix<T: Scalar>(n: usize) -> Result<ComplexMatrix<T>> {
    if n == 0 {
        return Err(ApspError::InvalidDimension("dft_matrix: n = 0".into()));
    }
    let scale = fl::<T>(1.0) / fl::<T>(n as f64).sqrt();
    let step = -T::TAU() / fl::<T>(n as f64);
    Ok(Array2::from_shape_fn((n, n), |(r, c)| {
        // reduce r*c mod n first so the phase argument stays small
        let k = (r * c) % n;
        Complex::from_polar(scale, step * fl::<T>(k as f64))
    }))
}

/// Array steering vector `v_M(theta)`, `[v]_i = exp(-j pi i sin(theta))`,
/// for a half-wavelength uniform linear array.
pub fn steering_vector<T: Scalar>(m: usize, theta: T) -> Result<Array1<Complex<T>>> {
    if m == 0 {
        return Err(ApspError::InvalidDimension("steering_vector: m = 0".into()));
    }
    if !theta.is_finite() || theta < -T::FRAC_PI_2() || theta > T::FRAC_PI_2() {
        return Err(ApspError::Domain(format!(
            "steering_vector: theta = {theta} outside [-pi/2, pi/2]"
        )));
    }
    let s = theta.sin();
    Ok(Array1::from_shape_fn(m, |i| {
        Complex::from_polar(T::one(), -T::PI() * fl::<T>(i as f64) * s)
    }))
}

/// Centered unitary DFT matrix `V_M` for the antenna axis. `m` must be even;
/// its `j`-th column equals `v_M(arcsin(2 j / M - 1)) / sqrt(M)`.
pub fn centered_dft_matrix<T: Scalar>(m: usize) -> Result<ComplexMatrix<T>> {
    if m == 0 || m % 2 != 0 {
        return Err(ApspError::UnsupportedConfig(format!(
            "centered_dft_matrix: m = {m} must be even and positive"
        )));
    }
    let scale = fl::<T>(1.0) / fl::<T>(m as f64).sqrt();
    let step = -T::TAU() / fl::<T>(m as f64);
    let half = (m / 2) as i64;
    Ok(Array2::from_shape_fn((m, m), |(i, j)| {
        let k = (i as i64 * (j as i64 - half)).rem_euclid(m as i64);
        Complex::from_polar(scale, step * fl::<T>(k as f64))
    }))
}

/// Multiply by the cyclic column-shift permutation: column `c` of the result
/// is column `(c - n) mod N` of `a`. Negative shifts are reduced modulo `N`.
///
/// The permutation matrix itself is never materialized; this is pure index
/// remapping (cost `O(rows * cols)`).
pub fn cyclic_shift_columns<A: Clone>(a: &Array2<A>, n: i64) -> Array2<A> {
    let cols = a.ncols() as i64;
    if cols == 0 {
        return a.clone();
    }
    let shift = n.rem_euclid(cols);
    Array2::from_shape_fn(a.raw_dim(), |(i, c)| {
        let src = (c as i64 - shift).rem_euclid(cols) as usize;
        a[[i, src]].clone()
    })
}

/// Bessel function of the first kind, order zero.
///
/// Power series below `|x| = 14` (the alternating series keeps about twelve
/// significant digits there), Hankel asymptotic expansion with optimal
/// truncation above. Absolute accuracy is better than 1e-10 over
/// `|x| <= 100` in f64.
pub fn bessel_j0<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() {
        return Err(ApspError::Domain(format!("bessel_j0: x = {x} not finite")));
    }
    let ax = x.abs();
    if ax <= fl(14.0) {
        Ok(j0_series(ax))
    } else {
        Ok(j0_asymptotic(ax))
    }
}

fn j0_series<T: Scalar>(x: T) -> T {
    let q = x * x * fl::<T>(0.25);
    let mut term = T::one();
    let mut sum = T::one();
    for k in 1..200usize {
        term = -term * q / fl::<T>((k * k) as f64);
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs().max(T::one()) {
            break;
        }
    }
    sum
}

/// Hankel expansion: `J0(x) ~ sqrt(2/(pi x)) (P cos w - Q sin w)` with
/// `w = x - pi/4`, `P = 1 - a2/x^2 + a4/x^4 - ...`, `Q = a1/x - a3/x^3 + ...`
/// and `a_k = prod_{j<=k} (2j-1)^2 / (k! 8^k)`. The series is truncated at
/// its smallest term.
fn j0_asymptotic<T: Scalar>(x: T) -> T {
    let mut p = T::one();
    let mut q = T::zero();
    // c_k = a_k(0) / x^k including the (-1)^k of the coefficient recurrence
    let mut c = T::one();
    let mut prev = T::infinity();
    for k in 1..=24usize {
        let odd = (2 * k - 1) as f64;
        c = -c * fl::<T>(odd * odd) / (fl::<T>(8.0 * k as f64) * x);
        if c.abs() >= prev {
            break; // past the optimal truncation point
        }
        prev = c.abs();
        // P takes c_0 - c_2 + c_4 - ..., Q takes c_1 - c_3 + c_5 - ...
        let sign = if (k / 2) % 2 == 0 { T::one() } else { -T::one() };
        if k % 2 == 0 {
            p = p + sign * c;
        } else {
            q = q + sign * c;
        }
    }
    let w = x - T::FRAC_PI_4();
    (fl::<T>(2.0) / (T::PI() * x)).sqrt() * (p * w.cos() - q * w.sin())
}

// ---------------------------------------------------------------------------
// FFT-backed products with V_M and F_{Nc x Ng}
// ---------------------------------------------------------------------------

fn fft_in_place<T: Scalar>(data: &mut [Complex<T>], len: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    for chunk in data.chunks_exact_mut(len) {
        fft.process(chunk);
    }
}

/// `V_M * H` for an `M x n` matrix `H` (length-`M` transforms down the columns).
pub fn centered_transform<T: Scalar>(h: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (m, n) = h.dim();
    let scale = fl::<T>(1.0) / fl::<T>(m as f64).sqrt();
    // work column-major: gather columns, FFT, apply the (-1)^i / sqrt(M) factor
    let mut buf: Vec<Complex<T>> = Vec::with_capacity(m * n);
    for j in 0..n {
        buf.extend(h.column(j).iter().copied());
    }
    fft_in_place(&mut buf, m, false);
    let mut out = Array2::zeros((m, n));
    for j in 0..n {
        for i in 0..m {
            let sign = if i % 2 == 0 { scale } else { -scale };
            out[[i, j]] = buf[j * m + i] * sign;
        }
    }
    out
}

/// `V_M^H * Y`, the adjoint of [`centered_transform`].
pub fn centered_transform_adjoint<T: Scalar>(y: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let (m, n) = y.dim();
    let scale = fl::<T>(1.0) / fl::<T>(m as f64).sqrt();
    let mut buf: Vec<Complex<T>> = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            let sign = if i % 2 == 0 { T::one() } else { -T::one() };
            buf.push(y[[i, j]] * sign);
        }
    }
    fft_in_place(&mut buf, m, true);
    let mut out = Array2::zeros((m, n));
    for j in 0..n {
        for i in 0..m {
            out[[i, j]] = buf[j * m + i] * scale;
        }
    }
    out
}

/// `H * F_{nc x ng}^T` for an `m x ng` matrix: zero-pad the rows to `nc` and
/// run forward length-`nc` DFTs along them.
pub fn dft_right_expand<T: Scalar>(h: &ComplexMatrix<T>, nc: usize) -> ComplexMatrix<T> {
    let (m, ng) = h.dim();
    assert!(ng <= nc, "guard length exceeds symbol length");
    let scale = fl::<T>(1.0) / fl::<T>(nc as f64).sqrt();
    let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); m * nc];
    for i in 0..m {
        for j in 0..ng {
            buf[i * nc + j] = h[[i, j]];
        }
    }
    fft_in_place(&mut buf, nc, false);
    Array2::from_shape_fn((m, nc), |(i, n)| buf[i * nc + n] * scale)
}

/// `Y * conj(F_{nc x ng})`, the adjoint of [`dft_right_expand`]: inverse
/// length-`nc` DFTs along the rows, keeping the first `ng` outputs.
pub fn dft_right_reduce<T: Scalar>(y: &ComplexMatrix<T>, ng: usize) -> ComplexMatrix<T> {
    let (m, nc) = y.dim();
    assert!(ng <= nc, "guard length exceeds symbol length");
    let scale = fl::<T>(1.0) / fl::<T>(nc as f64).sqrt();
    let mut buf: Vec<Complex<T>> = Vec::with_capacity(m * nc);
    for i in 0..m {
        buf.extend(y.row(i).iter().copied());
    }
    fft_in_place(&mut buf, nc, true);
    Array2::from_shape_fn((m, ng), |(i, j)| buf[i * nc + j] * scale)
}
