use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the probability machinery is generic over.
/// `f64` is the workhorse; `f32` trades precision for footprint.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn erfc(self) -> Self;
}

impl Scalar for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    fn erfc(self) -> Self {
        libm::erfc(f64::from(self)) as f32
    }
}
