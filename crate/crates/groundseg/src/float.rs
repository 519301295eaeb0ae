//! Transcendental shims for `no_std` builds.
//!
//! With `std` enabled the inherent `f64` methods are used and this module
//! contributes nothing. Without `std` the [`FloatMath`] trait routes the same
//! calls through `libm`; inherent methods win resolution when both exist, so
//! importing the prelude is always safe.

#[cfg(not(feature = "std"))]
pub(crate) trait FloatMath {
    fn sqrt(self) -> f64;
    fn exp(self) -> f64;
    fn ln(self) -> f64;
    fn atan2(self, other: f64) -> f64;
    fn sin(self) -> f64;
    fn cos(self) -> f64;
    fn hypot(self, other: f64) -> f64;
    fn floor(self) -> f64;
}

#[cfg(not(feature = "std"))]
impl FloatMath for f64 {
    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }
    #[inline]
    fn atan2(self, other: f64) -> f64 {
        libm::atan2(self, other)
    }
    #[inline]
    fn sin(self) -> f64 {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        libm::cos(self)
    }
    #[inline]
    fn hypot(self, other: f64) -> f64 {
        libm::hypot(self, other)
    }
    #[inline]
    fn floor(self) -> f64 {
        libm::floor(self)
    }
}

#[cfg(feature = "std")]
pub(crate) mod prelude {}

/// Import `float::prelude::*` in math-heavy modules so `no_std` builds
/// resolve the transcendental methods; under `std` the prelude is empty.
#[cfg(not(feature = "std"))]
pub(crate) mod prelude {
    pub(crate) use super::FloatMath;
}
