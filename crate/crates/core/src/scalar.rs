//! Scalar abstraction shared by every numeric module.
//!
//! All math in this crate is written once against [`Scalar`] and instantiated
//! for `f32` and `f64`. Random draws are always made in `f64` and converted, so
//! a given seed yields the same sampled parameters for either precision.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by feature maps, filters and estimators.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + FromStr + Send + Sync + 'static
{
    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(v: usize) -> Self {
        Self::lit(v as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {
    #[inline]
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    #[inline]
    fn epsilon() -> Self {
        f64::EPSILON
    }
}
