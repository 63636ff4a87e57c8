//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar usable by the probability, model and curriculum code.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are tuned
/// for `f64`, which is what the crate-root aliases use.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; lossy for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Floor applied to the second argument of a KL divergence before the log.
    #[inline]
    fn kl_floor() -> Self {
        Self::lit(1e-12)
    }

    /// Absolute tolerance for "sums to one" checks on a `k`-vector.
    #[inline]
    fn simplex_tol(k: usize) -> Self {
        let scaled = Self::epsilon() * Self::lit(16.0 * k as f64);
        scaled.max(Self::lit(1e-9))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
