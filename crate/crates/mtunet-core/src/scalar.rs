//! Scalar abstraction over the tensor element type.
//!
//! All math in this crate is generic over [`Scalar`], implemented for `f32`
//! and `f64`. Oracles and gradient checks run in `f64`; training may use
//! either precision.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a tensor: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Gauss error function (used by the exact GELU).
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    fn erf(self) -> f32 {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    fn erf(self) -> f64 {
        libm::erf(self)
    }
}

/// Infallible conversion from `f64` into a scalar type.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 converts to scalar")
}
