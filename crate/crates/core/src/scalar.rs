//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code runs in `f64` (the reference/test configuration) and `f32` (the fast
//! path). Gradient checks are always instantiated at `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + LowerExp
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Precision tag written into checkpoint headers.
    const PRECISION: &'static str;
}

macro_rules! impl_scalar {
    ($($t:ty => $name:literal),*) => {$(
        impl Scalar for $t {
            const PRECISION: &'static str = $name;
        }
    )*};
}

impl_scalar!(f32 => "f32", f64 => "f64");

/// Cast an `f64` constant into the working scalar type.
#[inline]
pub fn cast<F: Scalar>(x: f64) -> F {
    F::from(x).expect("finite f64 representable in scalar type")
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// ln(sigmoid(x)), computed as -softplus(-x) to stay finite for large |x|.
#[inline]
pub fn log_sigmoid<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_small_constants() {
        assert_eq!(cast::<f64>(0.75), 0.75);
        assert_eq!(cast::<f32>(0.5), 0.5f32);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }
}
