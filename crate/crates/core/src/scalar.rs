//! Storage scalar for vectors and centroids.
//!
//! Everything numeric in the crate is generic over [`Scalar`]. Storage may be
//! `f32` or `f64`; accumulation always happens in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Human readable type name, written into tree dumps.
    const NAME: &'static str;

    fn as_f64(self) -> f64;

    /// Rounds to the nearest representable storage value.
    fn from_f64_lossy(x: f64) -> Self;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_roundtrips_through_f64() {
        for x in [0.1f32, -3.25, f32::MIN_POSITIVE, 1.0e30, 7.0] {
            assert_eq!(f32::from_f64_lossy(x.as_f64()).to_bits(), x.to_bits());
        }
    }
}
