//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All kernels, objectives and optimizers are written against [`Scalar`], so
//! the same code runs in `f64` (the default used by the CLI and the tests) and
//! in `f32` (useful when a `K x D` weight matrix would not fit in memory at
//! double precision).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        <Self as NumCast>::from(x).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    /// Smallest tolerance that is meaningful at this precision.
    #[inline]
    fn tol_floor() -> Self {
        Self::epsilon() * Self::of(64.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
