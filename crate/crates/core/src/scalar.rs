//! Floating-point element type shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Element type of tensors, parameters and optimizer state.
///
/// Implemented for `f32` (training) and `f64` (gradient checks and oracles).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant, panicking only for values no float can hold.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
