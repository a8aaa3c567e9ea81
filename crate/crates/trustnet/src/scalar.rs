//! Scalar abstraction for the numeric core.
//!
//! Everything that does floating-point math (logistic regression, the autodiff
//! tape, propagation, losses, metrics) is generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`. The combinatorial layers (graph loading,
//! triangle census, ego-network enumeration, feature counting) work on integer
//! counts and stay concrete. Crate-root aliases pin the default precision.

use num_traits::Float;

/// Floating-point scalar usable by the numeric core.
///
/// The `lit` / `to_f64` pair exists because configuration, reports, and file
/// formats are all `f64`; narrowing happens in exactly one place per value.
pub trait Scalar:
    Float
    + num_traits::NumAssignOps
    + Copy
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    /// Converts an `f64` constant into `Self`, rounding if narrower.
    fn lit(v: f64) -> Self;
    /// Widens to `f64` for reporting and serialization.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> f64 {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    let one = S::one();
    if x >= S::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}
