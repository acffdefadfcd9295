//! Floating point abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Real scalar used for attributes, weights and scores.
///
/// Implemented for `f32` and `f64`; the rest of the crate is written against
/// this trait and the crate root exposes `f64` aliases.
pub trait Scalar:
    NdFloat + FromPrimitive + FromStr + Default + Display + Debug + LowerExp + Send + Sync + 'static
{
    /// Significant digits needed to round-trip a value through text.
    const DIGITS: usize;

    /// Converts an `f64` literal; every finite `f64` is representable
    /// (possibly rounded) in both supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    const DIGITS: usize = 9;

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DIGITS: usize = 17;

    fn to_f64_lossy(self) -> f64 {
        self
    }
}
