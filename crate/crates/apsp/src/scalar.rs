//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over the real scalar type so the same
//! code runs in `f64` (the default for experiments and tests) or `f32`.
//! The trait bundles the float traits the matrix and FFT kernels need plus
//! Gaussian sampling, which `rand_distr` only implements per concrete type.

use num_traits::{Float, FloatConst};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftNum;
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

pub trait Scalar: Float + FloatConst + FftNum + Sum + Display + LowerExp {
    /// Draw one sample of a standard normal N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn fl<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal not representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_draws_are_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..32 {
            let x: f64 = Scalar::standard_normal(&mut a);
            let y: f64 = Scalar::standard_normal(&mut b);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn normal_moments_roughly_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for _ in 0..n {
            let x: f64 = Scalar::standard_normal(&mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
