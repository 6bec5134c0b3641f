//! Floating-point abstraction shared by the surrogate, acquisition and
//! Pareto code.
//!
//! Everything numeric in this crate is written against [`Scalar`], which is
//! implemented for `f32` and `f64`. Special functions (`erfc`) are evaluated
//! in `f64` and narrowed back, so `f32` models lose nothing beyond their own
//! precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by the numerical core.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    let z = z.as_f64();
    T::lit(INV_SQRT_2PI * (-0.5 * z * z).exp())
}

/// Standard normal CDF via the complementary error function, accurate in
/// both tails.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    T::lit(norm_cdf_f64(z.as_f64()))
}

pub(crate) fn norm_cdf_f64(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)` without underflow for very negative `z`.
pub fn log_norm_cdf<T: Scalar>(z: T) -> T {
    T::lit(log_norm_cdf_f64(z.as_f64()))
}

pub(crate) fn log_norm_cdf_f64(z: f64) -> f64 {
    if z > 0.0 {
        (-norm_cdf_f64(-z)).ln_1p()
    } else if z > -30.0 {
        norm_cdf_f64(z).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let z2 = z * z;
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Inverse Mills ratio `φ(z)/Φ(z)`, finite for all `z`.
pub(crate) fn inv_mills_f64(z: f64) -> f64 {
    if z > -30.0 {
        INV_SQRT_2PI * (-0.5 * z * z).exp() / norm_cdf_f64(z)
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert!((norm_cdf(0.0_f64) - 0.5).abs() < 1e-15);
        // Φ(2) to 16 digits.
        assert!((norm_cdf(2.0_f64) - 0.977_249_868_051_820_8).abs() < 1e-14);
        assert!((norm_pdf(0.0_f64) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((norm_cdf(1.0_f32) - 0.841_344_7).abs() < 1e-6);
    }

    #[test]
    fn log_cdf_is_continuous_across_branches() {
        for &z in &[-30.0 - 1e-9, -30.0 + 1e-9] {
            let a = log_norm_cdf_f64(z);
            let b = log_norm_cdf_f64(-30.0);
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!(log_norm_cdf_f64(12.0).abs() < 1e-30);
        assert!(log_norm_cdf_f64(-100.0).is_finite());
    }

    #[test]
    fn mills_ratio_branches_agree() {
        let near = inv_mills_f64(-29.999);
        let far = inv_mills_f64(-30.001);
        assert!((near - far).abs() / near < 1e-3);
    }
}
